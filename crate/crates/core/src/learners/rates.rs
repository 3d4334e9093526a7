//! Learning-rate schedules `(α_t⁻¹, β_t⁻¹)` and their offline audit.
//!
//! Every schedule is a square root of a running sum. The runners feed the
//! sums through [`RateState`]; [`rate_check`] recomputes the same values
//! from a transcript without touching [`RateState`].

use serde::{Deserialize, Serialize};

use super::trace::Transcript;
use super::Regime;
use crate::error::{Error, Result};
use crate::schedulers::{tail_probability, Harmonic, SchedulerConfig};
use crate::simplex::RegWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    BatchBandit,
    BatchFullinfo,
    CnpBandit,
    CnpFullinfo,
    NcpBandit,
    NcpFullinfo,
    FixedConst,
    BaselineSeldin,
}

impl RateKind {
    pub fn name(&self) -> &'static str {
        match self {
            RateKind::BatchBandit => "batch_bandit",
            RateKind::BatchFullinfo => "batch_fullinfo",
            RateKind::CnpBandit => "cnp_bandit",
            RateKind::CnpFullinfo => "cnp_fullinfo",
            RateKind::NcpBandit => "ncp_bandit",
            RateKind::NcpFullinfo => "ncp_fullinfo",
            RateKind::FixedConst => "fixed_const",
            RateKind::BaselineSeldin => "baseline_seldin",
        }
    }

    /// Regime the schedule was designed for; `None` if it serves both.
    pub fn regime(&self) -> Option<Regime> {
        match self {
            RateKind::BatchBandit | RateKind::CnpBandit | RateKind::NcpBandit => {
                Some(Regime::Bandit)
            }
            RateKind::BatchFullinfo | RateKind::CnpFullinfo | RateKind::NcpFullinfo => {
                Some(Regime::FullInfo)
            }
            RateKind::FixedConst | RateKind::BaselineSeldin => None,
        }
    }

    pub fn is_batch_style(&self) -> bool {
        matches!(self, RateKind::BatchBandit | RateKind::BatchFullinfo)
    }

    /// Rates for the given kind and regime, e.g. `(Cnp, Bandit)`.
    pub fn for_regime(family: RateFamily, regime: Regime) -> Self {
        match (family, regime) {
            (RateFamily::Batch, Regime::Bandit) => RateKind::BatchBandit,
            (RateFamily::Batch, Regime::FullInfo) => RateKind::BatchFullinfo,
            (RateFamily::Cnp, Regime::Bandit) => RateKind::CnpBandit,
            (RateFamily::Cnp, Regime::FullInfo) => RateKind::CnpFullinfo,
            (RateFamily::Ncp, Regime::Bandit) => RateKind::NcpBandit,
            (RateFamily::Ncp, Regime::FullInfo) => RateKind::NcpFullinfo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateFamily {
    Batch,
    Cnp,
    Ncp,
}

/// Checks that `kind` is usable in `regime`.
pub(crate) fn check_regime(kind: RateKind, regime: Regime) -> Result<()> {
    match kind.regime() {
        Some(r) if r != regime => Err(Error::Pairing {
            policy: regime.name().to_string(),
            rates: kind.name().to_string(),
        }),
        _ => Ok(()),
    }
}

/// Constants a schedule may depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateContext {
    pub kind: RateKind,
    pub regime: Regime,
    pub num_actions: usize,
    pub capacity: usize,
    pub d_max: usize,
    /// Weights used by `FixedConst`.
    pub fixed: Option<RegWeights>,
}

impl RateContext {
    pub fn new(kind: RateKind, regime: Regime, num_actions: usize) -> Self {
        Self {
            kind,
            regime,
            num_actions,
            capacity: 0,
            d_max: 0,
            fixed: None,
        }
    }

    fn ln_k(&self) -> f64 {
        (self.num_actions as f64).ln()
    }
}

/// Running sums behind the schedules.
#[derive(Debug, Clone)]
pub struct RateState {
    ctx: RateContext,
    /// `t` or `τ`.
    rounds: u64,
    /// `Σ μ_s` (clairvoyant).
    sum_mu: f64,
    /// `Σ d_s` (clairvoyant).
    sum_delay: u64,
    /// `Σ σ_s` or `Σ σ^b_τ`.
    pending_mass: u64,
    /// `Σ_{Õ_t} z_s²`.
    sum_z2: f64,
    /// `Σ_{Õ_t} z_s d_s`.
    sum_zd: f64,
    mu_max: f64,
}

impl RateState {
    pub fn new(ctx: RateContext) -> Result<Self> {
        if ctx.kind == RateKind::FixedConst && ctx.fixed.is_none() {
            return Err(Error::InvalidParameter(
                "fixed_const rates need explicit weights".into(),
            ));
        }
        check_regime(ctx.kind, ctx.regime)?;
        Ok(Self {
            ctx,
            rounds: 0,
            sum_mu: 0.0,
            sum_delay: 0,
            pending_mass: 0,
            sum_z2: 0.0,
            sum_zd: 0.0,
            mu_max: 1.0,
        })
    }

    pub fn context(&self) -> &RateContext {
        &self.ctx
    }

    /// Starts round (or batch) `t`.
    pub fn begin_round(&mut self) {
        self.rounds += 1;
    }

    /// Clairvoyant information for the current round: `μ_t` and `d_t`.
    pub fn add_clairvoyant(&mut self, mu: f64, delay: usize) {
        self.sum_mu += mu;
        self.sum_delay += delay as u64;
    }

    /// Number of outstanding rounds (or batches) at the current one.
    pub fn add_pending(&mut self, outstanding: usize) {
        self.pending_mass += outstanding as u64;
    }

    /// Feedback from a round with `z_s = μ_s` and delay `d_s`.
    pub fn add_observation(&mut self, z: f64, delay: usize) {
        self.sum_z2 += z * z;
        self.sum_zd += z * delay as f64;
    }

    /// `μ_max,t` for the current round.
    pub fn set_mu_max(&mut self, mu_max: f64) {
        self.mu_max = mu_max;
    }

    pub fn weights(&self) -> Result<RegWeights> {
        let ctx = &self.ctx;
        let (a, b) = match ctx.kind {
            RateKind::FixedConst => {
                let w = ctx.fixed.expect("checked in new");
                (w.inv_alpha(), w.inv_beta())
            }
            RateKind::BaselineSeldin => seldin(ctx.regime, ctx.ln_k(), self.rounds, self.sum_delay),
            RateKind::BatchBandit => batch_bandit(ctx.ln_k(), self.rounds, self.pending_mass),
            RateKind::BatchFullinfo => batch_fullinfo(ctx.ln_k(), self.rounds, self.pending_mass),
            RateKind::CnpBandit => cnp_bandit(ctx.ln_k(), self.sum_mu, self.sum_delay),
            RateKind::CnpFullinfo => cnp_fullinfo(ctx.ln_k(), self.sum_mu, self.sum_delay),
            RateKind::NcpBandit => ncp_bandit(
                ctx.ln_k(),
                self.sum_z2,
                self.sum_zd,
                ctx.capacity,
                self.mu_max,
                ctx.d_max,
            ),
            RateKind::NcpFullinfo => ncp_fullinfo(
                ctx.ln_k(),
                self.sum_z2,
                self.sum_zd,
                ctx.capacity,
                self.mu_max,
                ctx.d_max,
            ),
        };
        RegWeights::new(a, b)
    }
}

// Formulas. Bandit entropy weights are 0 while their accumulator is 0;
// full-information ones are floored at √(1/ln K).

fn entropy_or_zero(acc: f64, ln_k: f64) -> f64 {
    if acc > 0.0 {
        (acc / ln_k).sqrt()
    } else {
        0.0
    }
}

fn entropy_floored(acc: f64, ln_k: f64) -> f64 {
    (acc.max(1.0) / ln_k).sqrt()
}

fn seldin(regime: Regime, ln_k: f64, rounds: u64, sum_delay: u64) -> (f64, f64) {
    match regime {
        Regime::Bandit => (
            (rounds as f64).sqrt(),
            entropy_or_zero(sum_delay as f64, ln_k),
        ),
        Regime::FullInfo => (0.0, entropy_floored(rounds as f64 + sum_delay as f64, ln_k)),
    }
}

fn batch_bandit(ln_k: f64, batches: u64, pending_mass: u64) -> (f64, f64) {
    (
        (batches as f64).sqrt(),
        entropy_or_zero(pending_mass as f64, ln_k),
    )
}

fn batch_fullinfo(ln_k: f64, batches: u64, pending_mass: u64) -> (f64, f64) {
    (
        0.0,
        entropy_floored(batches as f64 + pending_mass as f64, ln_k),
    )
}

fn cnp_bandit(ln_k: f64, sum_mu: f64, sum_delay: u64) -> (f64, f64) {
    (sum_mu.sqrt(), entropy_or_zero(sum_delay as f64, ln_k))
}

fn cnp_fullinfo(ln_k: f64, sum_mu: f64, sum_delay: u64) -> (f64, f64) {
    (0.0, entropy_floored(sum_mu + sum_delay as f64, ln_k))
}

fn ncp_bandit(
    ln_k: f64,
    sum_z2: f64,
    sum_zd: f64,
    c: usize,
    mu_max: f64,
    d_max: usize,
) -> (f64, f64) {
    let c = c as f64;
    (
        (sum_z2 + c * mu_max * mu_max).sqrt(),
        entropy_or_zero(sum_zd + c * mu_max * d_max as f64, ln_k),
    )
}

fn ncp_fullinfo(
    ln_k: f64,
    sum_z2: f64,
    sum_zd: f64,
    c: usize,
    mu_max: f64,
    d_max: usize,
) -> (f64, f64) {
    let c = c as f64;
    (
        0.0,
        entropy_floored(sum_z2 + sum_zd + c * mu_max * (mu_max + d_max as f64), ln_k),
    )
}

/// `μ_max,t = 1 / min{1, c_t/(d_max+1)}`.
pub fn mu_max(cfg: &SchedulerConfig, harmonic: f64, d_max: usize) -> f64 {
    1.0 / tail_probability(cfg.scale(harmonic), d_max)
}

/// What [`rate_check`] needs besides the transcript.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAudit {
    pub ctx: RateContext,
    /// Batch size for batch-style schedules (1 for per-round play).
    pub batch_size: usize,
    /// Scheduler parameters for NCP schedules.
    pub scheduler: Option<SchedulerConfig>,
}

impl RateAudit {
    /// Audit for [`run_baseline`](super::run_baseline).
    pub fn baseline(rates: RateKind, regime: Regime, num_actions: usize) -> Self {
        Self {
            ctx: RateContext::new(rates, regime, num_actions),
            batch_size: 1,
            scheduler: None,
        }
    }

    /// Audit for [`run_batched`](super::run_batched) with batch size `b`.
    pub fn batched(regime: Regime, num_actions: usize, b: usize) -> Self {
        Self {
            ctx: RateContext::new(
                RateKind::for_regime(RateFamily::Batch, regime),
                regime,
                num_actions,
            ),
            batch_size: b,
            scheduler: None,
        }
    }
}

/// Recomputes every `(α_t⁻¹, β_t⁻¹)` from the transcript and compares them
/// bit-for-bit with the values used online; also checks that both are
/// non-decreasing. Reports the first offending round.
pub fn rate_check(audit: &RateAudit, transcript: &Transcript) -> Result<()> {
    let ctx = &audit.ctx;
    let rows = transcript.rows();
    let ln_k = ctx.ln_k();
    let expected: Vec<(f64, f64)> = match ctx.kind {
        RateKind::FixedConst => {
            let w = ctx.fixed.ok_or_else(|| Error::RateAudit {
                round: 0,
                detail: "fixed_const audit without weights".into(),
            })?;
            vec![(w.inv_alpha(), w.inv_beta()); rows.len()]
        }
        RateKind::BaselineSeldin | RateKind::CnpBandit | RateKind::CnpFullinfo => {
            let mut out = Vec::with_capacity(rows.len());
            let mut sum_mu = 0.0;
            let mut sum_d = 0u64;
            for (i, row) in rows.iter().enumerate() {
                sum_mu += 1.0 / row.p;
                sum_d += row.delay as u64;
                out.push(match ctx.kind {
                    RateKind::BaselineSeldin => seldin(ctx.regime, ln_k, i as u64 + 1, sum_d),
                    RateKind::CnpBandit => cnp_bandit(ln_k, sum_mu, sum_d),
                    _ => cnp_fullinfo(ln_k, sum_mu, sum_d),
                });
            }
            out
        }
        RateKind::BatchBandit | RateKind::BatchFullinfo => {
            batch_expected(ctx, audit.batch_size, transcript)
        }
        RateKind::NcpBandit | RateKind::NcpFullinfo => {
            let cfg = audit.scheduler.ok_or_else(|| Error::RateAudit {
                round: 0,
                detail: "NCP audit without scheduler parameters".into(),
            })?;
            let mut out = Vec::with_capacity(rows.len());
            let mut h = Harmonic::new();
            let mut sum_z2 = 0.0;
            let mut sum_zd = 0.0;
            for i in 0..rows.len() {
                if i > 0 {
                    for &s in &rows[i - 1].delivered {
                        let src = &rows[s - 1];
                        let z = 1.0 / src.p;
                        sum_z2 += z * z;
                        sum_zd += z * src.delay as f64;
                    }
                }
                let mm = mu_max(&cfg, h.advance(), ctx.d_max);
                out.push(if ctx.kind == RateKind::NcpBandit {
                    ncp_bandit(ln_k, sum_z2, sum_zd, ctx.capacity, mm, ctx.d_max)
                } else {
                    ncp_fullinfo(ln_k, sum_z2, sum_zd, ctx.capacity, mm, ctx.d_max)
                });
            }
            out
        }
    };

    let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (row, (a, b)) in rows.iter().zip(expected) {
        if row.alpha_inv.to_bits() != a.to_bits() || row.beta_inv.to_bits() != b.to_bits() {
            return Err(Error::RateAudit {
                round: row.t,
                detail: format!(
                    "online ({}, {}) vs offline ({a}, {b})",
                    row.alpha_inv, row.beta_inv
                ),
            });
        }
        if row.alpha_inv < prev.0 || row.beta_inv < prev.1 {
            return Err(Error::RateAudit {
                round: row.t,
                detail: format!(
                    "rates decreased: ({}, {}) after ({}, {})",
                    row.alpha_inv, row.beta_inv, prev.0, prev.1
                ),
            });
        }
        prev = (row.alpha_inv, row.beta_inv);
    }
    Ok(())
}

/// Batch-style rates from representatives and their batch delays
/// `d^b = ⌈(u+d_u)/b⌉ − ⌈u/b⌉`. With `b = 1` every row is a representative.
fn batch_expected(ctx: &RateContext, b: usize, transcript: &Transcript) -> Vec<(f64, f64)> {
    let rows = transcript.rows();
    let n_batches = rows.len().div_ceil(b);
    // σ^b_τ = #{s < τ : s + d^b_s ≥ τ}, via a difference array over batches.
    let mut diff = vec![0i64; n_batches + 2];
    for row in rows.iter().filter(|r| r.admitted) {
        let u = row.t;
        let batch = u.div_ceil(b);
        let arrival_batch = (u + row.delay).div_ceil(b);
        if arrival_batch > batch {
            diff[batch + 1] += 1;
            let end = arrival_batch.min(n_batches) + 1;
            diff[end] -= 1;
        }
    }
    let mut sigma = 0i64;
    let mut mass = 0u64;
    let mut per_batch = Vec::with_capacity(n_batches);
    for (tau, d) in diff.iter().enumerate().take(n_batches + 1).skip(1) {
        sigma += d;
        mass += sigma as u64;
        per_batch.push(if ctx.kind == RateKind::BatchBandit {
            batch_bandit(ctx.ln_k(), tau as u64, mass)
        } else {
            batch_fullinfo(ctx.ln_k(), tau as u64, mass)
        });
    }
    rows.iter()
        .map(|r| per_batch[r.t.div_ceil(b) - 1])
        .collect()
}
