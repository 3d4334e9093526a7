use log::warn;

use crate::error::{invalid, Result};
use crate::learners::RegretTrace;

/// Sample mean and standard error (`sample std / √n`; 0 for `n < 2`).
pub fn mean_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Least-squares fit of `ln(regret)` against `ln(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Horizons that entered the fit.
    pub used: Vec<usize>,
    /// Horizons dropped for a non-positive mean regret.
    pub excluded: Vec<usize>,
}

/// Fits the growth exponent of mean regret over a horizon sweep. Needs at
/// least four horizons spanning a factor of 16 or more.
pub fn scaling_report(points: &[(usize, f64)]) -> Result<ScalingFit> {
    let mut horizons: Vec<usize> = points.iter().map(|p| p.0).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() != points.len() {
        return Err(invalid("duplicate horizons in scaling sweep"));
    }
    if points.len() < 4 {
        return Err(invalid(format!(
            "scaling fit needs at least 4 horizons, got {}",
            points.len()
        )));
    }
    if horizons[0] == 0 || horizons[horizons.len() - 1] < 16 * horizons[0] {
        return Err(invalid(format!(
            "scaling fit needs horizons spanning at least 16x, got {}..{}",
            horizons[0],
            horizons[horizons.len() - 1]
        )));
    }
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, r) in points {
        if r > 0.0 && r.is_finite() {
            used.push(t);
            xs.push((t as f64).ln());
            ys.push(r.ln());
        } else {
            warn!("excluding T = {t} from the scaling fit: mean regret {r} is not positive");
            excluded.push(t);
        }
    }
    if xs.len() < 2 {
        return Err(invalid(
            "fewer than two positive regrets left for the scaling fit",
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        used,
        excluded,
    })
}

/// Empirical `Pr(|S_t⁰| = C)` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverflowPoint {
    pub t: usize,
    pub full: usize,
    pub runs: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Wilson lower bound above `delta`.
    pub flagged: bool,
}

/// Per-checkpoint overflow rates over runs with a common capacity and
/// checkpoint grid, with Wilson intervals at quantile `z`.
pub fn overflow_report(traces: &[RegretTrace], delta: f64, z: f64) -> Result<Vec<OverflowPoint>> {
    let first = traces
        .first()
        .ok_or_else(|| invalid("overflow report needs at least one run"))?;
    let capacity = first
        .capacity
        .ok_or_else(|| invalid("overflow report needs capacity-limited runs"))?;
    let grid: Vec<usize> = first.checkpoints.iter().map(|c| c.t).collect();
    let mut full = vec![0usize; grid.len()];
    for tr in traces {
        if tr.capacity != Some(capacity) || tr.checkpoints.len() != grid.len() {
            return Err(invalid(
                "overflow report needs runs with one capacity and checkpoint grid",
            ));
        }
        for (i, cp) in tr.checkpoints.iter().enumerate() {
            if cp.t != grid[i] {
                return Err(invalid(
                    "overflow report needs runs with one checkpoint grid",
                ));
            }
            if cp.occupancy == capacity {
                full[i] += 1;
            }
        }
    }
    Ok(overflow_points(&grid, &full, traces.len(), delta, z))
}

fn overflow_points(
    grid: &[usize],
    full: &[usize],
    runs: usize,
    delta: f64,
    z: f64,
) -> Vec<OverflowPoint> {
    grid.iter()
        .zip(full)
        .map(|(&t, &f)| {
            let (lower, upper) = wilson_interval(f, runs, z);
            OverflowPoint {
                t,
                full: f,
                runs,
                rate: f as f64 / runs as f64,
                lower,
                upper,
                flagged: lower > delta,
            }
        })
        .collect()
}
