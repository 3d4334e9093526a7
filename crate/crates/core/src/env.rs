//! Problem instances: the oblivious adversary's loss matrix and delay
//! sequence, fixed before the game starts.
//!
//! Rounds are 1-based throughout the public API (`t ∈ 1..=T`), matching the
//! harmonic normalizer and batch arithmetic used elsewhere in the crate.

use std::path::Path;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::streams::{stream, INSTANCE_STREAM};

/// Default mean loss of the planted best arm in stochastic-gap instances.
pub const DEFAULT_MU_STAR: f64 = 0.25;

/// Losses and delays for `T` rounds and `K` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    horizon: usize,
    num_actions: usize,
    /// Row-major `T x K`.
    losses: Vec<f64>,
    delays: Vec<usize>,
}

impl Instance {
    /// Builds an instance from explicit data, validating every invariant.
    pub fn new(num_actions: usize, losses: Vec<f64>, delays: Vec<usize>) -> Result<Self> {
        let horizon = delays.len();
        if horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        if num_actions < 2 {
            return Err(invalid(format!("need K >= 2 actions, got {num_actions}")));
        }
        if losses.len() != horizon * num_actions {
            return Err(invalid(format!(
                "loss matrix has {} entries, expected {horizon} x {num_actions}",
                losses.len()
            )));
        }
        if let Some((idx, l)) = losses
            .iter()
            .enumerate()
            .find(|(_, l)| !(0.0..=1.0).contains(*l))
        {
            return Err(invalid(format!(
                "loss at round {} action {} is {l}, outside [0, 1]",
                idx / num_actions + 1,
                idx % num_actions
            )));
        }
        if let Some((s, d)) = delays.iter().enumerate().find(|(_, d)| **d > horizon) {
            return Err(invalid(format!(
                "delay {d} at round {} exceeds the horizon {horizon}",
                s + 1
            )));
        }
        Ok(Self {
            horizon,
            num_actions,
            losses,
            delays,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Loss vector of round `t` (1-based).
    #[inline]
    pub fn losses_at(&self, t: usize) -> &[f64] {
        let start = (t - 1) * self.num_actions;
        &self.losses[start..start + self.num_actions]
    }

    #[inline]
    pub fn loss(&self, t: usize, action: usize) -> f64 {
        self.losses[(t - 1) * self.num_actions + action]
    }

    /// Delay of round `t` (1-based).
    #[inline]
    pub fn delay(&self, t: usize) -> usize {
        self.delays[t - 1]
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn loss_matrix(&self) -> &[f64] {
        &self.losses
    }

    pub fn d_max(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    pub fn total_delay(&self) -> u64 {
        self.delays.iter().map(|&d| d as u64).sum()
    }

    /// Loads an instance from CSV with header `t,d,l_1,...,l_K`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "t" || &headers[1] != "d" {
            return Err(invalid(
                "instance CSV header must be `t,d,l_1,...,l_K` with K >= 2",
            ));
        }
        for (i, h) in headers.iter().skip(2).enumerate() {
            if h != format!("l_{}", i + 1) {
                return Err(invalid(format!("unexpected loss column `{h}`")));
            }
        }
        let k = headers.len() - 2;
        let mut losses = Vec::new();
        let mut delays = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let parse_err =
                |col: &str| invalid(format!("row {}: cannot parse column `{col}`", row + 1));
            let t: usize = record[0].parse().map_err(|_| parse_err("t"))?;
            if t != row + 1 {
                return Err(invalid(format!(
                    "row {}: rounds must be consecutive from 1, found t = {t}",
                    row + 1
                )));
            }
            delays.push(record[1].parse().map_err(|_| parse_err("d"))?);
            for j in 0..k {
                losses.push(
                    record[2 + j]
                        .parse::<f64>()
                        .map_err(|_| parse_err(&headers[2 + j]))?,
                );
            }
        }
        Self::new(k, losses, delays)
    }

    /// Writes the instance in the same CSV layout [`Instance::from_csv`] reads.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "d".to_string()];
        header.extend((1..=self.num_actions).map(|i| format!("l_{i}")));
        w.write_record(&header)?;
        for t in 1..=self.horizon {
            let mut rec = vec![t.to_string(), self.delay(t).to_string()];
            rec.extend(self.losses_at(t).iter().map(|l| l.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How delays are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelaySpec {
    /// `d_t = d` for every round.
    Fixed {
        d: usize,
    },
    /// I.i.d. geometric delays on `{0, 1, ...}` with the given mean,
    /// clipped to the horizon.
    Geometric {
        mean: f64,
    },
    /// I.i.d. uniform integer delays on `[min, max]`, clipped to the horizon.
    Uniform {
        min: usize,
        max: usize,
    },
    Explicit {
        delays: Vec<usize>,
    },
}

/// How losses are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Bernoulli losses: mean `mu_star` on `best_arm`, `mu_star + gap` elsewhere.
    StochasticGap {
        gap: f64,
        #[serde(default)]
        best_arm: usize,
        #[serde(default = "default_mu_star")]
        mu_star: f64,
    },
    /// Deterministic losses whose best arm rotates every `period` rounds:
    /// `0.5 - gap/2` on the current best arm, `0.5 + gap/2` elsewhere.
    AdversarialDrift {
        period: usize,
        #[serde(default = "default_drift_gap")]
        gap: f64,
    },
    /// Row-major rows, one per round.
    Explicit { losses: Vec<Vec<f64>> },
}

fn default_mu_star() -> f64 {
    DEFAULT_MU_STAR
}

fn default_drift_gap() -> f64 {
    0.5
}

/// Full description of an instance; together with `seed` it determines the
/// generated [`Instance`] bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub horizon: usize,
    pub actions: usize,
    pub delay: DelaySpec,
    pub loss: LossSpec,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Largest delay this spec can produce, used as the known `d_max` bound.
    pub fn d_max_bound(&self) -> usize {
        match &self.delay {
            DelaySpec::Fixed { d } => (*d).min(self.horizon),
            DelaySpec::Geometric { .. } => self.horizon,
            DelaySpec::Uniform { max, .. } => (*max).min(self.horizon),
            DelaySpec::Explicit { delays } => delays.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Generates the instance described by `spec`.
pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    let t_len = spec.horizon;
    let k = spec.actions;
    if t_len < 1 {
        return Err(invalid("horizon must be at least 1"));
    }
    if k < 2 {
        return Err(invalid(format!("need K >= 2 actions, got {k}")));
    }
    let mut rng = stream(spec.seed, INSTANCE_STREAM);

    let delays = match &spec.delay {
        DelaySpec::Fixed { d } => {
            if *d > t_len {
                return Err(invalid(format!("fixed delay {d} exceeds horizon {t_len}")));
            }
            vec![*d; t_len]
        }
        DelaySpec::Geometric { mean } => {
            if !mean.is_finite() || *mean < 0.0 {
                return Err(invalid(format!(
                    "geometric mean delay must be >= 0, got {mean}"
                )));
            }
            let dist = Geometric::new(1.0 / (mean + 1.0))
                .map_err(|e| invalid(format!("geometric delay: {e}")))?;
            (0..t_len)
                .map(|_| (dist.sample(&mut rng) as usize).min(t_len))
                .collect()
        }
        DelaySpec::Uniform { min, max } => {
            if min > max {
                return Err(invalid(format!(
                    "uniform delay range [{min}, {max}] is empty"
                )));
            }
            (0..t_len)
                .map(|_| rng.random_range(*min..=*max).min(t_len))
                .collect()
        }
        DelaySpec::Explicit { delays } => {
            if delays.len() != t_len {
                return Err(invalid(format!(
                    "explicit delays have length {}, horizon is {t_len}",
                    delays.len()
                )));
            }
            delays.clone()
        }
    };

    let losses = match &spec.loss {
        LossSpec::StochasticGap {
            gap,
            best_arm,
            mu_star,
        } => {
            if !(*gap > 0.0 && *gap < 1.0) {
                return Err(invalid(format!("gap must lie in (0, 1), got {gap}")));
            }
            if *best_arm >= k {
                return Err(invalid(format!(
                    "best arm {best_arm} out of range for K = {k}"
                )));
            }
            if !(*mu_star >= 0.0 && mu_star + gap <= 1.0) {
                return Err(invalid(format!(
                    "need 0 <= mu_star and mu_star + gap <= 1, got {mu_star} + {gap}"
                )));
            }
            let best = Bernoulli::new(*mu_star).map_err(|e| invalid(e.to_string()))?;
            let rest = Bernoulli::new(mu_star + gap).map_err(|e| invalid(e.to_string()))?;
            let mut out = Vec::with_capacity(t_len * k);
            for _ in 0..t_len {
                for i in 0..k {
                    let hit = if i == *best_arm {
                        best.sample(&mut rng)
                    } else {
                        rest.sample(&mut rng)
                    };
                    out.push(if hit { 1.0 } else { 0.0 });
                }
            }
            out
        }
        LossSpec::AdversarialDrift { period, gap } => {
            if *period == 0 {
                return Err(invalid("drift period must be positive"));
            }
            if !(*gap > 0.0 && *gap <= 1.0) {
                return Err(invalid(format!("drift gap must lie in (0, 1], got {gap}")));
            }
            let mut out = Vec::with_capacity(t_len * k);
            for t in 0..t_len {
                let best = (t / period) % k;
                for i in 0..k {
                    out.push(if i == best {
                        0.5 - gap / 2.0
                    } else {
                        0.5 + gap / 2.0
                    });
                }
            }
            out
        }
        LossSpec::Explicit { losses } => {
            if losses.len() != t_len || losses.iter().any(|row| row.len() != k) {
                return Err(invalid(format!(
                    "explicit losses must be {t_len} rows of {k}"
                )));
            }
            losses.iter().flatten().copied().collect()
        }
    };

    Instance::new(k, losses, delays)
}

/// Delay summary used by the theory checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayStats {
    /// `D = Σ d_t`.
    pub total_delay: u64,
    /// `σ_t` for `t = 1..=T` (index `t - 1`): rounds `s < t` with `s + d_s ≥ t`.
    pub outstanding: Vec<usize>,
    pub sigma_max: usize,
    pub d_max: usize,
}

pub fn delay_stats(inst: &Instance) -> DelayStats {
    let t_len = inst.horizon();
    // diff[t] accumulates +1 at s+1 and -1 after min(s + d_s, T).
    let mut diff = vec![0i64; t_len + 2];
    for s in 1..=t_len {
        let last = (s + inst.delay(s)).min(t_len);
        if last > s {
            diff[s + 1] += 1;
            diff[last + 1] -= 1;
        }
    }
    let mut outstanding = Vec::with_capacity(t_len);
    let mut running = 0i64;
    for d in &diff[1..=t_len] {
        running += d;
        outstanding.push(running as usize);
    }
    DelayStats {
        total_delay: inst.total_delay(),
        sigma_max: outstanding.iter().copied().max().unwrap_or(0),
        d_max: inst.d_max(),
        outstanding,
    }
}

/// Best single action in hindsight and its cumulative loss; ties go to the
/// smallest index.
pub fn best_fixed_action(inst: &Instance) -> (usize, f64) {
    let totals = cumulative_action_losses(inst, inst.horizon());
    argmin_first(&totals)
}

/// Per-action cumulative losses over rounds `1..=upto`.
pub fn cumulative_action_losses(inst: &Instance, upto: usize) -> Vec<f64> {
    let mut totals = vec![0.0; inst.num_actions()];
    for t in 1..=upto {
        for (acc, l) in totals.iter_mut().zip(inst.losses_at(t)) {
            *acc += l;
        }
    }
    totals
}

pub(crate) fn argmin_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}
