use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::run::{read_csv, CheckpointStats, SummaryStats};
use super::stats::{scaling_report, ScalingFit};
use crate::error::Result;

/// Growth exponent of one capacity setting over its horizon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub experiment: String,
    pub capacity: Option<usize>,
    pub expectation_capacity: Option<f64>,
    pub fit: ScalingFit,
}

/// Checkpoint whose Wilson lower bound on `Pr(|S_t⁰| = C)` exceeds `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverflowFlag {
    pub label: String,
    pub t: usize,
    pub wilson_lower: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summaries: Vec<SummaryStats>,
    pub scaling: Vec<ScalingRow>,
    pub overflow_flags: Vec<OverflowFlag>,
}

/// Reads `summary.csv` and `checkpoints.csv` from a results directory, fits
/// regret exponents for sweeps with enough horizons, and flags checkpoints
/// breaching their experiment's `δ`.
pub fn report_dir(dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let summaries: Vec<SummaryStats> = read_csv(&dir.join("summary.csv"))?;
    let checkpoints: Vec<CheckpointStats> = read_csv(&dir.join("checkpoints.csv"))?;

    let mut groups: BTreeMap<(String, Option<usize>, String), Vec<&SummaryStats>> = BTreeMap::new();
    for s in &summaries {
        let ce = s
            .expectation_capacity
            .map(|c| c.to_string())
            .unwrap_or_default();
        groups
            .entry((s.experiment.clone(), s.capacity, ce))
            .or_default()
            .push(s);
    }
    let mut scaling = Vec::new();
    for ((experiment, capacity, _), rows) in &groups {
        let points: Vec<(usize, f64)> = rows.iter().map(|s| (s.horizon, s.mean_regret)).collect();
        let (lo, hi) = points
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        if points.len() >= 4 && hi >= 16 * lo {
            scaling.push(ScalingRow {
                experiment: experiment.clone(),
                capacity: *capacity,
                expectation_capacity: rows[0].expectation_capacity,
                fit: scaling_report(&points)?,
            });
        }
    }

    let deltas: BTreeMap<&str, f64> = summaries
        .iter()
        .filter_map(|s| s.delta.map(|d| (s.label.as_str(), d)))
        .collect();
    let overflow_flags = checkpoints
        .iter()
        .filter_map(|cp| {
            let delta = *deltas.get(cp.label.as_str())?;
            (cp.wilson_lower > delta).then(|| OverflowFlag {
                label: cp.label.clone(),
                t: cp.t,
                wilson_lower: cp.wilson_lower,
                delta,
            })
        })
        .collect();

    Ok(Report {
        summaries,
        scaling,
        overflow_flags,
    })
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<40} {:>8} {:>14} {:>10} {:>10} {:>9}",
            "label", "seeds", "mean_regret", "std_err", "overflow", "observed"
        )?;
        for s in &self.summaries {
            writeln!(
                f,
                "{:<40} {:>8} {:>14.3} {:>10.3} {:>10.5} {:>9.4}",
                s.label,
                s.seeds,
                s.mean_regret,
                s.regret_std_err,
                s.overflow_rate,
                s.mean_observed_fraction
            )?;
        }
        for row in &self.scaling {
            let setting = match (row.capacity, row.expectation_capacity) {
                (Some(c), _) => format!(" C={c}"),
                (None, Some(ce)) => format!(" C_E={ce}"),
                (None, None) => String::new(),
            };
            write!(
                f,
                "scaling {}{}: slope {:.4} over T = {:?}",
                row.experiment, setting, row.fit.slope, row.fit.used
            )?;
            if !row.fit.excluded.is_empty() {
                write!(f, " (excluded {:?})", row.fit.excluded)?;
            }
            writeln!(f)?;
        }
        if self.overflow_flags.is_empty() {
            writeln!(f, "overflow: no checkpoint above delta")?;
        }
        for flag in &self.overflow_flags {
            writeln!(
                f,
                "overflow: {} t={} wilson lower {:.5} > delta {}",
                flag.label, flag.t, flag.wilson_lower, flag.delta
            )?;
        }
        Ok(())
    }
}
