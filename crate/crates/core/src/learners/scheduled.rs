use std::collections::HashMap;

use super::rates::{check_regime, mu_max, RateAudit, RateContext, RateFamily, RateKind, RateState};
use super::trace::{RegretTrace, Transcript, TranscriptRow};
use super::{apply_feedback, LossLedger, Regime, RunOptions};
use crate::env::Instance;
use crate::error::{invalid, Error, Result};
use crate::schedulers::{tail_probability, Harmonic, Policy, Scheduler, SchedulerConfig};
use crate::simplex::{sample_action, solve, CumEstimate, RegWeights};

/// Scheduler and learning-rate choice for [`run_scheduled`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledParams {
    pub scheduler: SchedulerConfig,
    pub rates: RateKind,
    /// Weights for `FixedConst` rates.
    pub fixed_weights: Option<RegWeights>,
    /// Known upper bound on `d_max` (NCP rates); defaults to the instance's.
    pub d_max: Option<usize>,
}

impl ScheduledParams {
    pub fn new(scheduler: SchedulerConfig, rates: RateKind) -> Self {
        Self {
            scheduler,
            rates,
            fixed_weights: None,
            d_max: None,
        }
    }

    fn rate_context(&self, regime: Regime, num_actions: usize, d_max: usize) -> RateContext {
        let mut ctx = RateContext::new(self.rates, regime, num_actions);
        ctx.capacity = self.scheduler.capacity;
        ctx.d_max = d_max;
        ctx.fixed = self.fixed_weights;
        ctx
    }

    /// Audit for a [`run_scheduled`] run of these parameters on `inst`.
    pub fn audit(&self, regime: Regime, inst: &Instance) -> RateAudit {
        RateAudit {
            ctx: self.rate_context(
                regime,
                inst.num_actions(),
                self.d_max.unwrap_or_else(|| inst.d_max()),
            ),
            batch_size: 1,
            scheduler: Some(self.scheduler),
        }
    }
}

/// Rejects scheduler/rate combinations whose rates would use information
/// the scheduler's framework does not reveal.
pub fn validate_pairing(policy: Policy, rates: RateKind, regime: Regime) -> Result<()> {
    let ok = match policy {
        Policy::BernoulliClairvoyant => {
            matches!(rates, RateKind::CnpBandit | RateKind::CnpFullinfo)
        }
        Policy::ParetoProxy => matches!(rates, RateKind::NcpBandit | RateKind::NcpFullinfo),
        Policy::FixedP => rates == RateKind::FixedConst,
    };
    if !ok {
        return Err(Error::Pairing {
            policy: policy.name().into(),
            rates: rates.name().into(),
        });
    }
    check_regime(rates, regime)
}

/// Delayed FTRL with a precommitted scheduler. Per round: rates from the
/// information available so far, solve and draw, admission, deliveries
/// weighted by `1/p_s`, cumulative update, preemptions.
pub fn run_scheduled(
    inst: &Instance,
    regime: Regime,
    params: &ScheduledParams,
    master_seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    let cfg = params.scheduler;
    validate_pairing(cfg.policy, params.rates, regime)?;
    let d_max = params.d_max.unwrap_or_else(|| inst.d_max());
    if d_max < inst.d_max() {
        return Err(invalid(format!(
            "d_max bound {d_max} is below the instance's {}",
            inst.d_max()
        )));
    }
    let t_max = inst.horizon();
    let k = inst.num_actions();
    let mut rate_state = RateState::new(params.rate_context(regime, k, d_max))?;

    let mut scheduler = Scheduler::new(cfg, master_seed)?;
    let mut rng = opts.learner_rng(master_seed);
    let mut harmonic = Harmonic::new();
    let mut ledger = LossLedger::new(inst, opts)?;
    let mut cum = CumEstimate::zeros(k);
    let mut pending: HashMap<usize, (usize, f64)> = HashMap::new();
    let mut transcript = opts.transcript.then(|| Transcript::with_capacity(t_max));
    let mut observations = 0;
    let mut overflow_rounds = 0;
    let mut max_pending = 0;

    // Σ p_s over admitted-or-not rounds s ≤ t with s + d_s ≥ t (known-p
    // policies only): an upper bound on E|S_t¹|.
    let known_p = cfg.policy != Policy::ParetoProxy;
    let mut expected_occ = 0.0;
    let mut expire_mass = if known_p {
        vec![0.0; t_max + 2]
    } else {
        Vec::new()
    };

    for t in 1..=t_max {
        let h = harmonic.advance();
        let d_t = inst.delay(t);

        rate_state.begin_round();
        match cfg.policy {
            Policy::BernoulliClairvoyant => {
                rate_state.add_clairvoyant(1.0 / cfg.probability(h, d_t), d_t);
            }
            Policy::ParetoProxy => rate_state.set_mu_max(mu_max(&cfg, h, d_max)),
            Policy::FixedP => {}
        }
        let w = rate_state.weights()?;
        let x = solve(&cum, &w)?;
        let action = sample_action(&x, &mut rng);
        let prob = x.probs()[action];
        ledger.play(t, &x);

        // The environment's d_t only schedules the feedback reveal for the
        // non-clairvoyant policies.
        let decision = scheduler.step(t, d_t)?;
        if decision.occupancy_before == cfg.capacity {
            overflow_rounds += 1;
        }
        if decision.admitted {
            pending.insert(t, (action, prob));
            max_pending = max_pending.max(pending.len());
        }
        let occupancy_after = scheduler.occupancy();
        let p_t = match decision.p {
            Some(p) => p,
            None => tail_probability(decision.scale.expect("proxy policy has a scale"), d_t),
        };
        if known_p {
            expected_occ -= expire_mass[t];
            expected_occ += p_t;
            if t + d_t < t_max {
                expire_mass[t + d_t + 1] += p_t;
            }
        }

        let tick = scheduler.tick(t);
        for del in &tick.deliveries {
            let (a_s, prob_s) = pending
                .remove(&del.round)
                .ok_or_else(|| Error::Invariant(format!("round {} delivered twice", del.round)))?;
            apply_feedback(regime, inst, &mut cum, del.round, a_s, prob_s, del.p)?;
            if cfg.policy == Policy::ParetoProxy {
                rate_state.add_observation(1.0 / del.p, del.delay);
            }
            observations += 1;
            if let Some(tr) = transcript.as_mut() {
                if del.round < t {
                    tr.row_mut(del.round).observed = true;
                }
            }
        }
        for s in &tick.preempted {
            pending.remove(s);
        }

        if ledger.due(t) {
            ledger.record(
                t,
                decision.occupancy_before,
                occupancy_after,
                known_p.then_some(expected_occ.max(0.0)),
            );
        }
        if let Some(tr) = transcript.as_mut() {
            let delivered: Vec<usize> = tick.deliveries.iter().map(|d| d.round).collect();
            tr.push(TranscriptRow {
                t,
                action,
                prob_action: prob,
                admitted: decision.admitted,
                observed: delivered.contains(&t),
                p: p_t,
                delay: d_t,
                alpha_inv: w.inv_alpha(),
                beta_inv: w.inv_beta(),
                cum_loss: ledger.player_loss(),
                occupancy: decision.occupancy_before,
                delivered,
            });
        }
    }

    Ok(RegretTrace {
        horizon: t_max,
        capacity: Some(cfg.capacity),
        batch_size: 1,
        checkpoints: ledger.out,
        overflow_rounds,
        observations,
        max_occupancy: scheduler.max_occupancy(),
        max_pending,
        final_estimate: cum.values().to_vec(),
        transcript,
    })
}

/// Hard capacity used for an expectation-capacity run:
/// `⌈max{3,K} ln T⌉` (bandit) or `⌈max{3, ln K} ln T⌉` (full information),
/// at least 1.
pub fn expectation_capacity(regime: Regime, horizon: usize, num_actions: usize) -> usize {
    let ln_t = (horizon as f64).ln();
    let factor = match regime {
        Regime::Bandit => (num_actions as f64).max(3.0),
        Regime::FullInfo => (num_actions as f64).ln().max(3.0),
    };
    ((factor * ln_t).ceil() as usize).max(1)
}

/// Scheduler parameters for expectation capacity `c_e`: hard capacity from
/// [`expectation_capacity`], `α = 1`, `ν_t = 2 H_t max{1, C/C_E}`, and the
/// CNP (Bernoulli) or NCP (proxy) rates.
pub fn expectation_capacity_params(
    regime: Regime,
    horizon: usize,
    num_actions: usize,
    c_e: f64,
    policy: Policy,
) -> Result<ScheduledParams> {
    if !(c_e > 0.0 && c_e.is_finite()) {
        return Err(invalid(format!(
            "expectation capacity must be positive, got {c_e}"
        )));
    }
    let capacity = expectation_capacity(regime, horizon, num_actions);
    let multiplier = (capacity as f64 / c_e).max(1.0);
    let family = match policy {
        Policy::BernoulliClairvoyant => RateFamily::Cnp,
        Policy::ParetoProxy => RateFamily::Ncp,
        Policy::FixedP => {
            return Err(invalid(
                "expectation-capacity runs use the Bernoulli or proxy scheduler",
            ))
        }
    };
    let scheduler = SchedulerConfig {
        policy,
        ..SchedulerConfig::bernoulli(capacity, 1.0)
    }
    .with_nu_multiplier(multiplier);
    Ok(ScheduledParams::new(
        scheduler,
        RateKind::for_regime(family, regime),
    ))
}

/// [`run_scheduled`] under an expectation-capacity constraint `c_e`.
pub fn run_expectation_capacity(
    inst: &Instance,
    regime: Regime,
    c_e: f64,
    policy: Policy,
    master_seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    let params =
        expectation_capacity_params(regime, inst.horizon(), inst.num_actions(), c_e, policy)?;
    run_scheduled(inst, regime, &params, master_seed, opts)
}

/// Fixed-probability scheduler tuned with known `T` and `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPRecipe {
    pub p: f64,
    /// Capacity the formulas were evaluated at (the configured one, clamped
    /// to the largest value keeping `p ≤ 1`).
    pub effective_capacity: f64,
    pub weights: RegWeights,
}

/// Bandit: `p = (C²TK/(D+T)²)^{1/3}`, `α = (C√K/(T(D+T)))^{1/3}`,
/// `β = √(ln K/(D+T))`, valid for `C ≤ (D+T)/√(TK)`.
/// Full information: `p = (C²T ln K/(D+T)²)^{1/3}`,
/// `β = (C ln²K/(T(D+T)))^{1/3}`, valid for `C ≤ T/√((D+T) ln K)`.
pub fn fixed_p_recipe(
    regime: Regime,
    capacity: usize,
    horizon: usize,
    num_actions: usize,
    total_delay: u64,
) -> Result<FixedPRecipe> {
    if capacity == 0 || horizon == 0 || num_actions < 2 {
        return Err(invalid("fixed-p recipe needs C >= 1, T >= 1, K >= 2"));
    }
    let c = capacity as f64;
    let t = horizon as f64;
    let k = num_actions as f64;
    let ln_k = k.ln();
    let dt = total_delay as f64 + t;
    let (p, c_eff, weights) = match regime {
        Regime::Bandit => {
            let c_eff = c.min(dt / (t * k).sqrt());
            let p = (c_eff * c_eff * t * k / (dt * dt)).cbrt();
            let alpha = (c_eff * k.sqrt() / (t * dt)).cbrt();
            let beta = (ln_k / dt).sqrt();
            (p, c_eff, RegWeights::new(1.0 / alpha, 1.0 / beta)?)
        }
        Regime::FullInfo => {
            let c_eff = c.min(t / (dt * ln_k).sqrt());
            let p = (c_eff * c_eff * t * ln_k / (dt * dt)).cbrt();
            let beta = (c_eff * ln_k * ln_k / (t * dt)).cbrt();
            (p, c_eff, RegWeights::new(0.0, 1.0 / beta)?)
        }
    };
    Ok(FixedPRecipe {
        p: p.min(1.0),
        effective_capacity: c_eff,
        weights,
    })
}
