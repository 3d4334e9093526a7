#![allow(dead_code)]

use delaysched::env::{generate, DelaySpec, Instance, InstanceSpec, LossSpec};
use delaysched::learners::{Regime, Transcript};

pub fn gap_instance(horizon: usize, actions: usize, delay: DelaySpec, seed: u64) -> Instance {
    generate(&InstanceSpec {
        horizon,
        actions,
        delay,
        loss: LossSpec::StochasticGap {
            gap: 0.25,
            best_arm: 0,
            mu_star: 0.25,
        },
        seed,
    })
    .unwrap()
}

/// Rebuilds L̂ from the transcript: every delivered round's estimator, in
/// delivery order.
pub fn telescoped_estimate(inst: &Instance, regime: Regime, tr: &Transcript) -> Vec<f64> {
    let rows = tr.rows();
    let mut cum = vec![0.0; inst.num_actions()];
    for row in rows {
        for &s in &row.delivered {
            let src = &rows[s - 1];
            match regime {
                Regime::Bandit => {
                    cum[src.action] +=
                        inst.loss(s, src.action) / (src.prob_action.max(1e-15) * src.p);
                }
                Regime::FullInfo => {
                    for (c, l) in cum.iter_mut().zip(inst.losses_at(s)) {
                        *c += l / src.p;
                    }
                }
            }
        }
    }
    cum
}

/// Independent K = 3 FTRL oracle: minimises
/// `⟨x, L⟩ − 2a Σ√x_i + b Σ x_i ln x_i` over a grid of the simplex, then
/// refines by shrinking the grid around the incumbent.
pub fn grid_oracle3(l: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    let obj = |x: [f64; 3]| -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            v += x[i] * l[i] - 2.0 * a * x[i].sqrt();
            if x[i] > 0.0 {
                v += b * x[i] * x[i].ln();
            }
        }
        v
    };
    let n = 400;
    let mut best = [1.0 / 3.0; 3];
    let mut best_v = obj(best);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let x = [
                i as f64 / n as f64,
                j as f64 / n as f64,
                (n - i - j) as f64 / n as f64,
            ];
            let v = obj(x);
            if v < best_v {
                best_v = v;
                best = x;
            }
        }
    }
    let mut radius = 2.0 / n as f64;
    for _ in 0..60 {
        let m = 20;
        let centre = best;
        for i in -m..=m {
            for j in -m..=m {
                let x0 = centre[0] + radius * i as f64 / m as f64;
                let x1 = centre[1] + radius * j as f64 / m as f64;
                let x2 = 1.0 - x0 - x1;
                if x0 < 0.0 || x1 < 0.0 || x2 < 0.0 {
                    continue;
                }
                let x = [x0, x1, x2];
                let v = obj(x);
                if v < best_v {
                    best_v = v;
                    best = x;
                }
            }
        }
        radius *= 0.5;
    }
    best
}
