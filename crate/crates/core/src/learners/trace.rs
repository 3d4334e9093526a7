use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Regret and occupancy snapshot at a checkpoint round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    /// Σ_{s≤t} ⟨x_s, l_s⟩.
    pub player_loss: f64,
    /// min_i Σ_{s≤t} l_{s,i}.
    pub best_loss: f64,
    pub regret: f64,
    /// `|S_t⁰|`.
    pub occupancy: usize,
    /// `|S_t¹|`.
    pub occupancy_after: usize,
    /// Σ p_s over rounds `s ≤ t` still awaiting feedback, when the policy
    /// makes `p_s` known at admission.
    pub expected_occupancy: Option<f64>,
}

/// Summary of one learner run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub horizon: usize,
    pub capacity: Option<usize>,
    /// Rounds per action draw (1 unless batched).
    pub batch_size: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Rounds with `|S_t⁰| = C`.
    pub overflow_rounds: usize,
    /// Σ Z_t over delivered feedback.
    pub observations: usize,
    pub max_occupancy: usize,
    /// Largest number of rounds simultaneously awaiting feedback on the
    /// learner side (stored play records).
    pub max_pending: usize,
    /// L̂ᵒᵇˢ after the last round.
    pub final_estimate: Vec<f64>,
    pub transcript: Option<Transcript>,
}

impl RegretTrace {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("horizon is always a checkpoint")
    }

    pub fn final_regret(&self) -> f64 {
        self.final_checkpoint().regret
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observations as f64 / self.horizon as f64
    }
}

/// Powers of two up to `horizon`, followed by `horizon` itself.
pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
    let mut cps: Vec<usize> = std::iter::successors(Some(1usize), |c| c.checked_mul(2))
        .take_while(|&c| c <= horizon)
        .collect();
    if cps.last() != Some(&horizon) {
        cps.push(horizon);
    }
    cps
}

/// One row per round.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRow {
    pub t: usize,
    pub action: usize,
    /// `x_{t,A_t}`.
    pub prob_action: f64,
    /// Whether round `t` entered the tracking set.
    pub admitted: bool,
    /// `Z_t`, filled in when the feedback of round `t` is delivered.
    pub observed: bool,
    /// `p_t` evaluated with the true `d_t` (1 for unconstrained runs).
    pub p: f64,
    pub delay: usize,
    pub alpha_inv: f64,
    pub beta_inv: f64,
    /// Σ_{s≤t} ⟨x_s, l_s⟩.
    pub cum_loss: f64,
    /// `|S_t⁰|`.
    pub occupancy: usize,
    /// Rounds whose feedback arrived during round `t`, in increasing order.
    pub delivered: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    rows: Vec<TranscriptRow>,
}

pub const TRANSCRIPT_SCHEMA: &str = "# delaysched transcript v1";

impl Transcript {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            rows: Vec::with_capacity(n),
        }
    }

    pub fn from_rows(rows: Vec<TranscriptRow>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[TranscriptRow] {
        &self.rows
    }

    pub(crate) fn push(&mut self, row: TranscriptRow) {
        self.rows.push(row);
    }

    pub(crate) fn row_mut(&mut self, t: usize) -> &mut TranscriptRow {
        &mut self.rows[t - 1]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{TRANSCRIPT_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "t",
            "action",
            "admitted",
            "observed",
            "p_t",
            "alpha_inv",
            "beta_inv",
            "cum_loss",
            "delay",
            "occupancy",
            "delivered",
        ])?;
        for r in &self.rows {
            let delivered = r
                .delivered
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.t.to_string(),
                r.action.to_string(),
                u8::from(r.admitted).to_string(),
                u8::from(r.observed).to_string(),
                r.p.to_string(),
                r.alpha_inv.to_string(),
                r.beta_inv.to_string(),
                r.cum_loss.to_string(),
                r.delay.to_string(),
                r.occupancy.to_string(),
                delivered,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
