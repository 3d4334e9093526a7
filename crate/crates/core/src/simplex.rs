//! Per-round FTRL step over the probability simplex with the hybrid
//! ½-Tsallis + negative-entropy regularizer, action sampling and the
//! importance-weighted loss estimators.
//!
//! The minimizer of `⟨x, L⟩ + α⁻¹ F_Ts(x) + β⁻¹ F_NE(x)` is characterised by
//! `f'(x_i) = λ − L_i` with `f'(x) = −α⁻¹ x^{-1/2} + β⁻¹ (ln x + 1)`. `f'` is
//! strictly increasing, so each coordinate is recovered by inverting it, and
//! the multiplier `λ` is the root of the increasing convex map
//! `λ ↦ Σ_i (f')⁻¹(λ − L_i) − 1`.

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Required closeness of `Σ x_i` to one.
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;
/// Required spread of `f'(x_i) + L_i` across coordinates (absolute, for
/// cumulative losses up to ~10³; see [`kkt_tolerance`]).
pub const KKT_TOL: f64 = 1e-8;
/// Outer iteration budget.
pub const MAX_OUTER_ITERATIONS: usize = 200;
const MAX_INNER_ITERATIONS: usize = 100;
/// Floor applied to `x_a` when forming bandit estimators. The stored point
/// is never modified.
pub const PROB_FLOOR: f64 = 1e-15;

/// Regularizer weights `(α_t⁻¹, β_t⁻¹)`. `inv_alpha = 0` disables the
/// Tsallis part (full information); `inv_beta = 0` disables the entropy
/// part (used before any delay mass has accumulated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegWeights {
    inv_alpha: f64,
    inv_beta: f64,
}

impl RegWeights {
    pub fn new(inv_alpha: f64, inv_beta: f64) -> Result<Self> {
        if !inv_alpha.is_finite() || !inv_beta.is_finite() {
            return Err(Error::NonFinite(format!(
                "regularizer weights ({inv_alpha}, {inv_beta})"
            )));
        }
        if inv_alpha < 0.0 || inv_beta < 0.0 {
            return Err(invalid(format!(
                "regularizer weights must be non-negative, got ({inv_alpha}, {inv_beta})"
            )));
        }
        if inv_alpha == 0.0 && inv_beta == 0.0 {
            return Err(invalid("at least one regularizer weight must be positive"));
        }
        Ok(Self {
            inv_alpha,
            inv_beta,
        })
    }

    pub fn inv_alpha(&self) -> f64 {
        self.inv_alpha
    }

    pub fn inv_beta(&self) -> f64 {
        self.inv_beta
    }

    /// `f'(x)` for one coordinate.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let mut v = 0.0;
        if self.inv_alpha > 0.0 {
            v -= self.inv_alpha / x.sqrt();
        }
        if self.inv_beta > 0.0 {
            v += self.inv_beta * (x.ln() + 1.0);
        }
        v
    }

    /// `f''(x)`.
    #[inline]
    fn second_derivative(&self, x: f64) -> f64 {
        0.5 * self.inv_alpha / (x * x.sqrt()) + self.inv_beta / x
    }

    /// `(f')⁻¹(y)`.
    fn inverse_derivative(&self, y: f64) -> f64 {
        let (a, b) = (self.inv_alpha, self.inv_beta);
        if a == 0.0 {
            return (y / b - 1.0).exp();
        }
        if b == 0.0 {
            return if y < 0.0 {
                (a / y) * (a / y)
            } else {
                f64::INFINITY
            };
        }
        // Newton on w = ln x for h(w) = -a e^{-w/2} + b (w + 1) - y. h is
        // increasing and concave, so started left of the root the iterates
        // climb monotonically without overshooting. Both starting values are
        // lower bounds: the entropy-only inverse (Tsallis term is negative),
        // and for y < b the Tsallis bound from b (ln x + 1) <= b on x <= 1.
        let mut w = y / b - 1.0;
        if y < b {
            w = w.max(2.0 * (a / (b - y)).ln());
        }
        let mut lo = w;
        for _ in 0..MAX_INNER_ITERATIONS {
            let e = (-0.5 * w).exp();
            let h = -a * e + b * (w + 1.0) - y;
            let slope = 0.5 * a * e + b;
            let step = -h / slope;
            if h >= 0.0 {
                // Rounding pushed us onto the right side; this is the root to
                // working precision unless the step is large.
                if step.abs() <= 1e-15 * (1.0 + w.abs()) {
                    break;
                }
                w = 0.5 * (lo + w);
                continue;
            }
            lo = w;
            w += step;
            if step <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
                break;
            }
        }
        w.exp()
    }
}

/// A point of the probability simplex (`x_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(invalid("simplex point needs at least two coordinates"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid(format!("invalid probabilities {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `⟨x, l⟩`.
    pub fn expected_loss(&self, losses: &[f64]) -> f64 {
        self.0.iter().zip(losses).map(|(x, l)| x * l).sum()
    }
}

/// Cumulative observed loss estimate `L̂ᵒᵇˢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumEstimate(Vec<f64>);

impl CumEstimate {
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!(
                "cumulative estimate must be finite and >= 0: {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn add(&mut self, estimate: &[f64]) {
        for (acc, v) in self.0.iter_mut().zip(estimate) {
            *acc += v;
        }
    }

    pub(crate) fn add_at(&mut self, action: usize, value: f64) {
        self.0[action] += value;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Tolerance used to certify the KKT residual. Equals [`KKT_TOL`] while the
/// spread of the cumulative losses stays below 10⁴ and then grows with it,
/// since `f'(x_i) + L_i` cannot be resolved better than a few thousand ulps
/// of `L_i`.
pub fn kkt_tolerance(losses: &[f64]) -> f64 {
    let (lo, hi) = losses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    KKT_TOL.max((hi - lo) * 1e-12)
}

/// Spread of `f'(x_i) + L_i` over the coordinates with `x_i > 0`.
pub fn kkt_residual(x: &SimplexPoint, losses: &[f64], w: &RegWeights) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&xi, &li) in x.probs().iter().zip(losses) {
        if xi > 0.0 {
            let r = w.derivative(xi) + li;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    hi - lo
}

/// Solves the FTRL step for cumulative estimate `cum` and weights `w`.
pub fn solve(cum: &CumEstimate, w: &RegWeights) -> Result<SimplexPoint> {
    let losses = cum.values();
    let k = losses.len();
    if k < 2 {
        return Err(invalid("need at least two actions"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("cumulative estimate {losses:?}")));
    }
    let l_min = losses.iter().copied().fold(f64::INFINITY, f64::min);

    if w.inv_alpha == 0.0 {
        return Ok(softmax(losses, l_min, w.inv_beta));
    }

    // λ is measured relative to l_min; y_i = λ - (L_i - l_min).
    let shifted: Vec<f64> = losses.iter().map(|l| l - l_min).collect();
    let mut lo = w.derivative(1.0 / k as f64);
    let mut hi = w.derivative(1.0);
    let mut probs = vec![0.0; k];

    let eval = |lambda: f64, probs: &mut [f64]| -> (f64, f64) {
        let mut sum = 0.0;
        let mut slope = 0.0;
        for (p, s) in probs.iter_mut().zip(&shifted) {
            let x = w.inverse_derivative(lambda - s);
            *p = x;
            sum += x;
            slope += 1.0 / w.second_derivative(x);
        }
        (sum - 1.0, slope)
    };

    let mut lambda = hi;
    let mut converged = false;
    let mut last_gap = f64::INFINITY;
    for _ in 0..MAX_OUTER_ITERATIONS {
        let (gap, slope) = eval(lambda, &mut probs);
        last_gap = gap;
        if gap.abs() <= 1e-15 * k as f64 {
            converged = true;
            break;
        }
        if gap > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            converged = true;
            break;
        }
        let newton = lambda - gap / slope;
        lambda = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_OUTER_ITERATIONS,
            residual: last_gap.abs(),
        });
    }

    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let x = SimplexPoint(probs);

    let sum_err = (x.0.iter().sum::<f64>() - 1.0).abs();
    let residual = kkt_residual(&x, losses, w);
    if sum_err > SIMPLEX_SUM_TOL || residual.is_nan() || residual > kkt_tolerance(losses) {
        return Err(Error::NoConvergence {
            iterations: MAX_OUTER_ITERATIONS,
            residual: residual.max(sum_err),
        });
    }
    Ok(x)
}

/// `x_i ∝ exp(−(L_i − L_min) / β⁻¹)`. Subnormal weights are flushed to
/// zero: they carry too few bits for `ln x_i` to satisfy the KKT check.
fn softmax(losses: &[f64], l_min: f64, inv_beta: f64) -> SimplexPoint {
    let mut probs: Vec<f64> = losses
        .iter()
        .map(|l| (-(l - l_min) / inv_beta).exp())
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
        if *p < f64::MIN_POSITIVE {
            *p = 0.0;
        }
    }
    SimplexPoint(probs)
}

/// Draws `i` with probability `x_i`, consuming exactly one uniform.
pub fn sample_action<R: Rng + ?Sized>(x: &SimplexPoint, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in x.0.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        cum += p;
        if u < cum {
            return i;
        }
    }
    last_positive
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!(
            "observation probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Weight placed on the played coordinate: `loss / (x_a · p)`, with `x_a`
/// floored at [`PROB_FLOOR`].
#[inline]
pub fn importance_weight(loss: f64, prob_of_action: f64, p: f64) -> f64 {
    loss / (prob_of_action.max(PROB_FLOOR) * p)
}

/// Bandit estimator `l_{s,A_s} x_{s,A_s}⁻¹ e_{A_s} / p_s`.
pub fn bandit_estimator(
    loss: f64,
    action: usize,
    x_at_play: &SimplexPoint,
    p: f64,
) -> Result<Vec<f64>> {
    check_probability(p)?;
    if action >= x_at_play.dim() {
        return Err(invalid(format!("action {action} out of range")));
    }
    let mut out = vec![0.0; x_at_play.dim()];
    out[action] = importance_weight(loss, x_at_play.0[action], p);
    Ok(out)
}

/// Full-information estimator `l_s / p_s`.
pub fn fullinfo_estimator(loss_vec: &[f64], p: f64) -> Result<Vec<f64>> {
    check_probability(p)?;
    Ok(loss_vec.iter().map(|l| l / p).collect())
}
