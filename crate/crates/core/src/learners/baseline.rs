use std::collections::HashMap;

use super::rates::{RateContext, RateKind, RateState};
use super::trace::{RegretTrace, Transcript, TranscriptRow};
use super::{apply_feedback, LossLedger, Regime, RunOptions};
use crate::env::Instance;
use crate::error::{Error, Result};
use crate::simplex::{sample_action, solve, CumEstimate};

/// Rounds grouped by the round their feedback arrives, in increasing order.
fn arrivals_by_round(inst: &Instance) -> (Vec<usize>, Vec<usize>) {
    let t_max = inst.horizon();
    let mut offsets = vec![0usize; t_max + 2];
    for s in 1..=t_max {
        let a = s + inst.delay(s);
        if a <= t_max {
            offsets[a + 1] += 1;
        }
    }
    for i in 1..offsets.len() {
        offsets[i] += offsets[i - 1];
    }
    let mut fill = offsets.clone();
    let mut rounds = vec![0usize; offsets[t_max + 1]];
    for s in 1..=t_max {
        let a = s + inst.delay(s);
        if a <= t_max {
            rounds[fill[a]] = s;
            fill[a] += 1;
        }
    }
    (offsets, rounds)
}

/// Delayed FTRL that tracks every round (no capacity limit).
///
/// `rates` is `BaselineSeldin` (`α_t⁻¹ = √t`, `β_t⁻¹ = √(Σ_{s≤t} d_s / ln K)`)
/// or a batch-style schedule, which with per-round play uses the
/// outstanding counts `σ_t`.
pub fn run_baseline(
    inst: &Instance,
    regime: Regime,
    rates: RateKind,
    master_seed: u64,
    opts: &RunOptions,
) -> Result<RegretTrace> {
    if !matches!(rates, RateKind::BaselineSeldin) && !rates.is_batch_style() {
        return Err(Error::Pairing {
            policy: "baseline".into(),
            rates: rates.name().into(),
        });
    }
    let t_max = inst.horizon();
    let k = inst.num_actions();
    let mut rate_state = RateState::new(RateContext::new(rates, regime, k))?;
    let mut rng = opts.learner_rng(master_seed);
    let mut ledger = LossLedger::new(inst, opts)?;
    let mut cum = CumEstimate::zeros(k);
    let (offsets, arrivals) = arrivals_by_round(inst);
    // Play records of rounds still awaiting feedback.
    let mut pending: HashMap<usize, (usize, f64)> = HashMap::new();
    let mut transcript = opts.transcript.then(|| Transcript::with_capacity(t_max));
    let mut max_pending = 0;
    let mut observations = 0;
    let mut max_occupancy = 0;

    for t in 1..=t_max {
        let d_t = inst.delay(t);
        let outstanding = pending.len();
        rate_state.begin_round();
        if rates == RateKind::BaselineSeldin {
            rate_state.add_clairvoyant(1.0, d_t);
        } else {
            rate_state.add_pending(outstanding);
        }
        let w = rate_state.weights()?;
        let x = solve(&cum, &w)?;
        let action = sample_action(&x, &mut rng);
        let prob = x.probs()[action];
        ledger.play(t, &x);

        pending.insert(t, (action, prob));
        max_pending = max_pending.max(pending.len());
        max_occupancy = max_occupancy.max(pending.len());

        let delivered = &arrivals[offsets[t]..offsets[t + 1]];
        for &s in delivered {
            let (a_s, prob_s) = pending
                .remove(&s)
                .ok_or_else(|| Error::Invariant(format!("round {s} delivered twice")))?;
            apply_feedback(regime, inst, &mut cum, s, a_s, prob_s, 1.0)?;
            observations += 1;
            if let Some(tr) = transcript.as_mut() {
                if s < t {
                    tr.row_mut(s).observed = true;
                }
            }
        }

        if ledger.due(t) {
            ledger.record(t, outstanding, outstanding + 1, None);
        }
        if let Some(tr) = transcript.as_mut() {
            tr.push(TranscriptRow {
                t,
                action,
                prob_action: prob,
                admitted: true,
                observed: d_t == 0,
                p: 1.0,
                delay: d_t,
                alpha_inv: w.inv_alpha(),
                beta_inv: w.inv_beta(),
                cum_loss: ledger.player_loss(),
                occupancy: outstanding,
                delivered: delivered.to_vec(),
            });
        }
    }

    Ok(RegretTrace {
        horizon: t_max,
        capacity: None,
        batch_size: 1,
        checkpoints: ledger.out,
        overflow_rounds: 0,
        observations,
        max_occupancy,
        max_pending,
        final_estimate: cum.values().to_vec(),
        transcript,
    })
}
