//! Learner loops: unlimited-capacity delayed FTRL, batch partitioning, and
//! delayed FTRL driven by a precommitted scheduler.

mod baseline;
mod batched;
pub mod rates;
mod scheduled;
pub mod trace;

pub use baseline::run_baseline;
pub use batched::{batch_delay, default_batch_size, run_batched};
pub use rates::{rate_check, RateAudit, RateContext, RateFamily, RateKind, RateState};
pub use scheduled::{
    expectation_capacity, expectation_capacity_params, fixed_p_recipe, run_expectation_capacity,
    run_scheduled, validate_pairing, FixedPRecipe, ScheduledParams,
};
pub use trace::{default_checkpoints, Checkpoint, RegretTrace, Transcript, TranscriptRow};

use serde::{Deserialize, Serialize};

use crate::env::Instance;
use crate::error::{Error, Result};
use crate::simplex::{importance_weight, CumEstimate, SimplexPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bandit,
    #[serde(rename = "fullinfo", alias = "full_info")]
    FullInfo,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Bandit => "bandit",
            Regime::FullInfo => "fullinfo",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Keep a per-round transcript in the returned trace.
    pub transcript: bool,
    /// Checkpoint rounds (increasing); defaults to powers of two and `T`.
    pub checkpoints: Option<Vec<usize>>,
    /// Seed of the learner stream if it should differ from the master seed
    /// (the scheduler stream always uses the master seed).
    pub learner_seed: Option<u64>,
}

impl RunOptions {
    pub fn with_transcript() -> Self {
        Self {
            transcript: true,
            ..Self::default()
        }
    }

    pub(crate) fn learner_rng(&self, master_seed: u64) -> crate::streams::StreamRng {
        crate::streams::stream(
            self.learner_seed.unwrap_or(master_seed),
            crate::streams::LEARNER_STREAM,
        )
    }
}

/// Tracks the player's expected loss against every fixed action.
struct LossLedger<'a> {
    inst: &'a Instance,
    checkpoints: Vec<usize>,
    next: usize,
    player: f64,
    per_action: Vec<f64>,
    out: Vec<Checkpoint>,
}

impl<'a> LossLedger<'a> {
    fn new(inst: &'a Instance, opts: &RunOptions) -> Result<Self> {
        let checkpoints = match &opts.checkpoints {
            Some(c) => {
                if c.windows(2).any(|w| w[0] >= w[1])
                    || c.iter().any(|&t| t == 0 || t > inst.horizon())
                {
                    return Err(Error::InvalidParameter(format!("bad checkpoints {c:?}")));
                }
                c.clone()
            }
            None => default_checkpoints(inst.horizon()),
        };
        Ok(Self {
            inst,
            out: Vec::with_capacity(checkpoints.len()),
            checkpoints,
            next: 0,
            player: 0.0,
            per_action: vec![0.0; inst.num_actions()],
        })
    }

    /// Charges round `t` played from `x`.
    fn play(&mut self, t: usize, x: &SimplexPoint) {
        let l = self.inst.losses_at(t);
        self.player += x.expected_loss(l);
        for (acc, v) in self.per_action.iter_mut().zip(l) {
            *acc += v;
        }
    }

    fn due(&self, t: usize) -> bool {
        self.next < self.checkpoints.len() && self.checkpoints[self.next] == t
    }

    fn record(
        &mut self,
        t: usize,
        occupancy: usize,
        occupancy_after: usize,
        expected: Option<f64>,
    ) {
        let best = self
            .per_action
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        self.out.push(Checkpoint {
            t,
            player_loss: self.player,
            best_loss: best,
            regret: self.player - best,
            occupancy,
            occupancy_after,
            expected_occupancy: expected,
        });
        self.next += 1;
    }

    fn player_loss(&self) -> f64 {
        self.player
    }
}

/// Adds the estimator of round `s` (played `action` with probability
/// `prob`, observed with probability `p`) to `cum`.
fn apply_feedback(
    regime: Regime,
    inst: &Instance,
    cum: &mut CumEstimate,
    s: usize,
    action: usize,
    prob: f64,
    p: f64,
) -> Result<()> {
    match regime {
        Regime::Bandit => cum.add_at(action, importance_weight(inst.loss(s, action), prob, p)),
        Regime::FullInfo => {
            for (i, l) in inst.losses_at(s).iter().enumerate() {
                cum.add_at(i, l / p);
            }
        }
    }
    if !cum.is_finite() {
        return Err(Error::NonFinite(format!(
            "cumulative estimate after feedback from round {s} (action {action}, x_a = {prob:e}, p = {p:e}): {:?}",
            cum.values()
        )));
    }
    Ok(())
}
