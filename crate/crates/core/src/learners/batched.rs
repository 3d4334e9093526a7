use std::collections::HashMap;

use rand::Rng;

use super::rates::{RateContext, RateFamily, RateKind, RateState};
use super::trace::{RegretTrace, Transcript, TranscriptRow};
use super::{apply_feedback, LossLedger, Regime, RunOptions};
use crate::env::Instance;
use crate::error::{invalid, Error, Result};
use crate::schedulers::{Entry, Quantifier, TrackingSet};
use crate::simplex::{sample_action, solve, CumEstimate};
use crate::streams::{stream, SCHEDULER_STREAM};

/// `max{1, ⌈d_max/(C−1)⌉}`; with `C = 1` only `d_max = 0` is feasible.
pub fn default_batch_size(d_max: usize, capacity: usize) -> Result<usize> {
    if capacity == 0 {
        return Err(invalid("capacity must be positive"));
    }
    if d_max == 0 {
        return Ok(1);
    }
    if capacity < 2 {
        return Err(invalid(format!(
            "batching needs capacity >= 2 when d_max > 0 (d_max = {d_max})"
        )));
    }
    Ok(d_max.div_ceil(capacity - 1).max(1))
}

/// `d^b = ⌈(u + d_u)/b⌉ − ⌈u/b⌉` for representative `u`.
pub fn batch_delay(u: usize, d_u: usize, b: usize) -> usize {
    (u + d_u).div_ceil(b) - u.div_ceil(b)
}

/// Batch partitioning: one action per batch of `b` rounds, one uniformly
/// chosen representative per batch is tracked, and the cumulative estimate
/// seen by the solver only changes between batches.
pub fn run_batched(
    inst: &Instance,
    regime: Regime,
    capacity: usize,
    batch_size: Option<usize>,
    master_seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    let d_max = inst.d_max();
    let b = match batch_size {
        None => default_batch_size(d_max, capacity)?,
        Some(0) => return Err(invalid("batch size must be positive")),
        Some(b) => {
            if d_max > 0 && capacity < 2 {
                return Err(invalid("batching needs capacity >= 2 when d_max > 0"));
            }
            if b.saturating_mul(capacity - 1) < d_max {
                return Err(invalid(format!(
                    "batch size {b} with capacity {capacity} cannot cover d_max = {d_max}"
                )));
            }
            b
        }
    };
    let t_max = inst.horizon();
    let k = inst.num_actions();
    let n_batches = t_max.div_ceil(b);
    let occupancy_bound = 1 + d_max.div_ceil(b);

    let kind = RateKind::for_regime(RateFamily::Batch, regime);
    let mut rate_state = RateState::new(RateContext::new(kind, regime, k))?;
    let mut rep_rng = stream(master_seed, SCHEDULER_STREAM);
    let mut rng = opts.learner_rng(master_seed);
    let mut ledger = LossLedger::new(inst, opts)?;
    let mut cum = CumEstimate::zeros(k);
    let mut set = TrackingSet::new(capacity);
    let mut pending: HashMap<usize, (usize, f64)> = HashMap::new();
    let mut transcript = opts.transcript.then(|| Transcript::with_capacity(t_max));
    let mut arrived = Vec::new();
    let mut observations = 0;
    let mut max_pending = 0;
    let mut overflow_rounds = 0;
    // Σ_τ σ^b_τ and Σ_τ min{d^b_τ, T' − τ}; equal by construction.
    let mut pending_mass = 0u64;
    let mut delay_mass = 0u64;

    for tau in 1..=n_batches {
        let start = (tau - 1) * b + 1;
        let end = (tau * b).min(t_max);
        let rep = start + rep_rng.random_range(0..b);

        rate_state.begin_round();
        rate_state.add_pending(pending.len());
        pending_mass += pending.len() as u64;
        // Padding rounds beyond T have zero delay.
        let rep_delay = if rep <= t_max { inst.delay(rep) } else { 0 };
        let d_b = batch_delay(rep, rep_delay, b);
        delay_mass += d_b.min(n_batches - tau) as u64;

        let w = rate_state.weights()?;
        let x = solve(&cum, &w)?;
        let action = sample_action(&x, &mut rng);
        let prob = x.probs()[action];

        for t in start..=end {
            let occupancy = set.len();
            if occupancy == capacity {
                overflow_rounds += 1;
            }
            ledger.play(t, &x);
            let d_t = inst.delay(t);
            if t == rep {
                set.insert(Entry {
                    round: t,
                    arrival: t + d_t,
                    proxy_end: None,
                    quantifier: Quantifier::Known(1.0),
                })?;
                pending.insert(t, (action, prob));
                max_pending = max_pending.max(pending.len());
            }
            if set.len() > occupancy_bound {
                return Err(Error::Invariant(format!(
                    "batched occupancy {} exceeds 1 + ceil(d_max/b) = {occupancy_bound} at round {t}",
                    set.len()
                )));
            }
            let occupancy_after = set.len();

            arrived.clear();
            set.take_arrivals(t, &mut arrived);
            for e in &arrived {
                let (a_s, prob_s) = pending.remove(&e.round).ok_or_else(|| {
                    Error::Invariant(format!("round {} delivered twice", e.round))
                })?;
                // L̂ is only read at the next batch start, so adding now is
                // the same as adding at the end of the batch.
                apply_feedback(regime, inst, &mut cum, e.round, a_s, prob_s, 1.0)?;
                observations += 1;
                if let Some(tr) = transcript.as_mut() {
                    if e.round < t {
                        tr.row_mut(e.round).observed = true;
                    }
                }
            }

            if ledger.due(t) {
                ledger.record(t, occupancy, occupancy_after, None);
            }
            if let Some(tr) = transcript.as_mut() {
                tr.push(TranscriptRow {
                    t,
                    action,
                    prob_action: prob,
                    admitted: t == rep,
                    observed: t == rep && d_t == 0,
                    p: 1.0,
                    delay: d_t,
                    alpha_inv: w.inv_alpha(),
                    beta_inv: w.inv_beta(),
                    cum_loss: ledger.player_loss(),
                    occupancy,
                    delivered: arrived.iter().map(|e| e.round).collect(),
                });
            }
        }
    }

    if pending_mass != delay_mass {
        return Err(Error::Invariant(format!(
            "batch delay conservation failed: sum sigma^b = {pending_mass}, sum d^b = {delay_mass}"
        )));
    }

    Ok(RegretTrace {
        horizon: t_max,
        capacity: Some(capacity),
        batch_size: b,
        checkpoints: ledger.out,
        overflow_rounds,
        observations,
        max_occupancy: set.max_occupancy(),
        max_pending,
        final_estimate: cum.values().to_vec(),
        transcript,
    })
}
