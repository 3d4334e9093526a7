//! Tracking set, scheduling policies and the quantities they share:
//! harmonic normalizers, observation probabilities, Pareto proxy delays and
//! the Chernoff parameter.

mod policy;
mod tracking;

pub use policy::{
    simulate_scheduler, Decision, Delivery, Policy, ProbeStats, Scheduler, SchedulerConfig,
    SchedulerSimulation, Tick,
};
pub use tracking::{Entry, Quantifier, TrackingSet};

use rand::Rng;

use crate::error::{invalid, Result};

/// `H_t = Σ_{s ≤ t} 1/s`, summed forward.
pub fn harmonic(t: usize) -> f64 {
    let mut h = 0.0;
    for s in 1..=t {
        h += 1.0 / s as f64;
    }
    h
}

/// Running harmonic number. Advancing it `t` times yields exactly
/// [`harmonic`]`(t)` because both sum in the same order.
#[derive(Debug, Clone, Default)]
pub struct Harmonic {
    t: usize,
    value: f64,
}

impl Harmonic {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves to round `t + 1` and returns `H_{t+1}`.
    pub fn advance(&mut self) -> f64 {
        self.t += 1;
        self.value += 1.0 / self.t as f64;
        self.value
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// `g(α) = ln(1+α) − α/(1+α)`.
pub fn chernoff_gap(alpha: f64) -> f64 {
    alpha.ln_1p() - alpha / (1.0 + alpha)
}

/// Smallest `α > 0` with `ln(1+α) − α/(1+α) ≥ ln(1/δ)/C`, to relative
/// tolerance 1e-10. The returned value always satisfies the inequality.
pub fn chernoff_alpha(capacity: usize, delta: f64) -> Result<f64> {
    if capacity == 0 {
        return Err(invalid("capacity must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let target = (1.0 / delta).ln() / capacity as f64;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while chernoff_gap(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 * hi * 0.5 {
        let mid = 0.5 * (lo + hi);
        if chernoff_gap(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Pareto scale `c_t = C / ((1+α) ν_t)`.
#[inline]
pub fn proxy_scale(capacity: usize, alpha: f64, nu: f64) -> f64 {
    capacity as f64 / ((1.0 + alpha) * nu)
}

/// `min{1, c/(d+1)}`: the tail `Pr(d̃ ≥ d)` of the proxy law and the
/// observation probability of both precommitted schedulers.
#[inline]
pub fn tail_probability(scale: f64, delay: usize) -> f64 {
    (scale / (delay as f64 + 1.0)).min(1.0)
}

/// `p = min{1, C / ((1+α) ν (d+1))}`.
pub fn observation_probability(delay: usize, capacity: usize, alpha: f64, nu: f64) -> f64 {
    tail_probability(proxy_scale(capacity, alpha, nu), delay)
}

/// Proxy delay value meaning "never tracked".
pub const NEVER_TRACK: i64 = -1;
const PROXY_CAP: f64 = (1u64 << 62) as f64;

/// `⌊c/U − 1⌋` with `U` uniform on (0, 1]; `-1` means the round is never
/// tracked. Consumes exactly one uniform.
pub fn sample_proxy_delay<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> i64 {
    let u = 1.0 - rng.random::<f64>();
    let v = scale / u;
    if v < 1.0 {
        NEVER_TRACK
    } else if v >= PROXY_CAP {
        PROXY_CAP as i64
    } else {
        (v - 1.0).floor() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
        assert!((harmonic(10) - 7381.0 / 2520.0).abs() < 1e-15);
        let mut h = Harmonic::new();
        for t in 1..=1000 {
            assert_eq!(h.advance(), harmonic(t));
        }
    }

    #[test]
    fn chernoff_alpha_examples() {
        let t: f64 = 1e4;
        let c = (3.0 * t.ln()).ceil() as usize;
        assert_eq!(c, 28);
        let a = chernoff_alpha(c, t.powf(-0.5)).unwrap();
        assert!(a <= 1.0);

        let a = chernoff_alpha(5, 0.01).unwrap();
        let target = 100f64.ln() / 5.0;
        let g = chernoff_gap(a);
        assert!(
            g >= target && g <= target + 1e-9,
            "g = {g}, target = {target}"
        );

        let a = chernoff_alpha(10, 1.0 - 1e-9).unwrap();
        assert!(a > 0.0 && a < 1e-3);
        assert!(chernoff_alpha(0, 0.5).is_err());
        assert!(chernoff_alpha(3, 1.0).is_err());
    }

    #[test]
    fn observation_probability_examples() {
        assert_eq!(observation_probability(0, 1000, 1.0, 2.0), 1.0);
        assert_eq!(observation_probability(1, 8, 1.0, 2.0), 1.0);
        let p = observation_probability(2, 5, 1.0, 2.0 * harmonic(4));
        assert!((p - 0.2).abs() < 1e-15);
    }

    #[test]
    fn proxy_tail_examples() {
        assert_eq!(tail_probability(0.5, 0), 0.5);
        assert_eq!(tail_probability(0.5, 1), 0.25);
        assert_eq!(tail_probability(8.0, 3), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            assert!(sample_proxy_delay(16.0, &mut rng) >= 15);
        }
    }

    #[test]
    fn proxy_tail_half_scale_monte_carlo() {
        let c = 0.5;
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<i64> = (0..n).map(|_| sample_proxy_delay(c, &mut rng)).collect();
        for d in [0i64, 1, 3, 7] {
            let p = tail_probability(c, d as usize);
            let f = draws.iter().filter(|&&x| x >= d).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * se, "d={d}: {f} vs {p}");
        }
    }

    #[test]
    fn normalizer_sum_is_at_most_one() {
        let t = 10_000;
        let h: Vec<f64> = (1..=t)
            .scan(Harmonic::new(), |h, _| Some(h.advance()))
            .collect();
        for end in [1usize, 10, 100, 1000, 10_000] {
            let s: f64 = (1..=end)
                .map(|s| 1.0 / (2.0 * h[s - 1] * (end - s + 1) as f64))
                .sum();
            assert!(s <= 1.0, "t={end}: {s}");
        }
    }

    proptest! {
        #[test]
        fn chernoff_alpha_satisfies_condition(c in 1usize..500, delta in 1e-6f64..0.999) {
            let a = chernoff_alpha(c, delta).unwrap();
            let target = (1.0 / delta).ln() / c as f64;
            prop_assert!(chernoff_gap(a) >= target);
            prop_assert!(chernoff_gap(a * (1.0 - 1e-9)) < target || a < 1e-12);
        }

        #[test]
        fn proxy_delay_never_below_minus_one(scale in 1e-3f64..1e3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let d = sample_proxy_delay(scale, &mut rng);
                prop_assert!(d >= NEVER_TRACK);
                // Deterministic lower bound: d̃ ≥ ⌊c⌋ − 1 since U ≤ 1.
                prop_assert!(d >= scale.floor() as i64 - 1);
            }
        }

        #[test]
        fn observation_probability_in_unit_interval(
            d in 0usize..10_000, c in 1usize..200, alpha in 1e-3f64..10.0, t in 1usize..5000,
        ) {
            let p = observation_probability(d, c, alpha, 2.0 * harmonic(t));
            prop_assert!(p > 0.0 && p <= 1.0);
        }
    }
}
