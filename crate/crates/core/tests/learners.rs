mod common;

use common::{gap_instance, telescoped_estimate};
use delaysched::env::{delay_stats, DelaySpec, Instance};
use delaysched::learners::{
    batch_delay, expectation_capacity, expectation_capacity_params, fixed_p_recipe, rate_check,
    run_baseline, run_batched, run_expectation_capacity, run_scheduled, RateAudit, RateKind,
    Regime, RegretTrace, RunOptions, ScheduledParams, TranscriptRow,
};
use delaysched::schedulers::{Policy, SchedulerConfig};
use delaysched::simplex::RegWeights;
use delaysched::Error;
use proptest::prelude::*;

const REGIMES: [Regime; 2] = [Regime::Bandit, Regime::FullInfo];

fn opts() -> RunOptions {
    RunOptions::with_transcript()
}

fn actions(tr: &RegretTrace) -> Vec<usize> {
    tr.transcript
        .as_ref()
        .unwrap()
        .rows()
        .iter()
        .map(|r| r.action)
        .collect()
}

fn cnp(regime: Regime) -> RateKind {
    match regime {
        Regime::Bandit => RateKind::CnpBandit,
        Regime::FullInfo => RateKind::CnpFullinfo,
    }
}

fn ncp(regime: Regime) -> RateKind {
    match regime {
        Regime::Bandit => RateKind::NcpBandit,
        Regime::FullInfo => RateKind::NcpFullinfo,
    }
}

fn batch_rates(regime: Regime) -> RateKind {
    match regime {
        Regime::Bandit => RateKind::BatchBandit,
        Regime::FullInfo => RateKind::BatchFullinfo,
    }
}

fn fixed_params(regime: Regime, capacity: usize, p: f64) -> ScheduledParams {
    let weights = match regime {
        Regime::Bandit => RegWeights::new(10.0, 5.0).unwrap(),
        Regime::FullInfo => RegWeights::new(0.0, 5.0).unwrap(),
    };
    ScheduledParams {
        fixed_weights: Some(weights),
        ..ScheduledParams::new(SchedulerConfig::fixed_p(capacity, p), RateKind::FixedConst)
    }
}

/// Every runner on one instance, with the audit for its transcript.
fn all_runs(inst: &Instance, regime: Regime, seed: u64) -> Vec<(String, RegretTrace, RateAudit)> {
    let k = inst.num_actions();
    let d_max = inst.d_max();
    let capacity = 4;
    let mut out = Vec::new();
    for rates in [RateKind::BaselineSeldin, batch_rates(regime)] {
        let tr = run_baseline(inst, regime, rates, seed, &opts()).unwrap();
        out.push((
            format!("baseline/{}", rates.name()),
            tr,
            RateAudit::baseline(rates, regime, k),
        ));
    }
    let tr = run_batched(inst, regime, capacity, None, seed, &opts()).unwrap();
    let b = tr.batch_size;
    out.push(("batched".into(), tr, RateAudit::batched(regime, k, b)));
    let scheduled = [
        ScheduledParams::new(SchedulerConfig::bernoulli(capacity, 1.0), cnp(regime)),
        ScheduledParams {
            d_max: Some(d_max + 3),
            ..ScheduledParams::new(SchedulerConfig::proxy(capacity, 1.0), ncp(regime))
        },
        fixed_params(regime, capacity, 0.5),
    ];
    for params in scheduled {
        let tr = run_scheduled(inst, regime, &params, seed, &opts()).unwrap();
        out.push((
            params.scheduler.policy.name().into(),
            tr,
            params.audit(regime, inst),
        ));
    }
    for policy in [Policy::BernoulliClairvoyant, Policy::ParetoProxy] {
        let params = expectation_capacity_params(regime, inst.horizon(), k, 0.5, policy).unwrap();
        let tr = run_scheduled(inst, regime, &params, seed, &opts()).unwrap();
        out.push((
            format!("expectation/{}", policy.name()),
            tr,
            params.audit(regime, inst),
        ));
    }
    out
}

#[test]
fn baseline_single_round_plays_uniform() {
    for regime in REGIMES {
        let inst = Instance::new(2, vec![1.0, 0.0], vec![0]).unwrap();
        let tr = run_baseline(&inst, regime, RateKind::BaselineSeldin, 3, &opts()).unwrap();
        assert_eq!(tr.transcript.as_ref().unwrap().rows()[0].prob_action, 0.5);
        assert!(tr.final_regret() <= 1.0);
        assert_eq!(tr.final_regret(), 0.5);
    }
}

#[test]
fn baseline_identical_columns_has_zero_regret() {
    let inst = gap_instance(2000, 2, DelaySpec::Fixed { d: 7 }, 11);
    let losses: Vec<f64> = inst
        .loss_matrix()
        .chunks(2)
        .flat_map(|r| [r[0], r[0]])
        .collect();
    let inst = Instance::new(2, losses, inst.delays().to_vec()).unwrap();
    for regime in REGIMES {
        let tr = run_baseline(&inst, regime, RateKind::BaselineSeldin, 5, &opts()).unwrap();
        for cp in &tr.checkpoints {
            assert!(
                cp.regret.abs() <= 1e-7,
                "regret {} at t = {}",
                cp.regret,
                cp.t
            );
        }
    }
}

#[test]
fn baseline_fullinfo_without_delay_meets_exponential_weights_bound() {
    let t = 10_000;
    let inst = gap_instance(t, 2, DelaySpec::Fixed { d: 0 }, 2);
    let bound = 2.0 * (t as f64 * 2f64.ln()).sqrt();
    assert!((bound - 166.510_922_231_539_55).abs() < 1e-9);
    let tr = run_baseline(
        &inst,
        Regime::FullInfo,
        RateKind::BaselineSeldin,
        9,
        &opts(),
    )
    .unwrap();
    assert!(
        tr.final_regret() <= bound,
        "regret {} > {bound}",
        tr.final_regret()
    );
}

#[test]
fn batch_of_one_reproduces_baseline() {
    for regime in REGIMES {
        for seed in 0..5 {
            let inst = gap_instance(3000, 4, DelaySpec::Geometric { mean: 6.0 }, seed);
            let capacity = inst.d_max() + 1;
            let batched = run_batched(&inst, regime, capacity, Some(1), seed, &opts()).unwrap();
            let base = run_baseline(&inst, regime, batch_rates(regime), seed, &opts()).unwrap();
            assert_eq!(batched.batch_size, 1);
            assert_eq!(actions(&batched), actions(&base));
            assert_eq!(batched.final_estimate, base.final_estimate);
            assert_eq!(batched.checkpoints, base.checkpoints);
        }
    }
}

#[test]
fn transparent_scheduler_reproduces_baseline() {
    for regime in REGIMES {
        for seed in 0..5 {
            let t = 2000;
            let inst = gap_instance(t, 3, DelaySpec::Fixed { d: 0 }, seed);
            let params = ScheduledParams::new(SchedulerConfig::bernoulli(t, 1.0), cnp(regime));
            let sched = run_scheduled(&inst, regime, &params, seed, &opts()).unwrap();
            let base =
                run_baseline(&inst, regime, RateKind::BaselineSeldin, seed, &opts()).unwrap();
            let (s_rows, b_rows) = (
                sched.transcript.as_ref().unwrap().rows(),
                base.transcript.as_ref().unwrap().rows(),
            );
            assert!(s_rows.iter().all(|r| r.p == 1.0 && r.observed));
            assert_eq!(s_rows, b_rows);
            assert_eq!(sched.final_estimate, base.final_estimate);
        }
    }
}

#[test]
fn fixed_p_one_with_room_observes_everything() {
    for regime in REGIMES {
        let inst = gap_instance(300, 3, DelaySpec::Uniform { min: 0, max: 9 }, 4);
        let stats = delay_stats(&inst);
        let params = fixed_params(regime, stats.sigma_max + 1, 1.0);
        let tr = run_scheduled(&inst, regime, &params, 1, &opts()).unwrap();
        let reachable = (1..=inst.horizon())
            .filter(|&s| s + inst.delay(s) <= inst.horizon())
            .count();
        assert_eq!(tr.observations, reachable);
        assert_eq!(tr.overflow_rounds, 0);
    }
}

#[test]
fn batch_delay_example() {
    assert_eq!(batch_delay(2, 4, 3), 1);
    assert_eq!(batch_delay(7, 5, 1), 5);
}

#[test]
fn batched_fixed_delay_stays_within_two_slots() {
    let inst = gap_instance(5000, 4, DelaySpec::Fixed { d: 50 }, 8);
    for regime in REGIMES {
        let tr = run_batched(&inst, regime, 2, None, 3, &opts()).unwrap();
        assert_eq!(tr.batch_size, 50);
        assert!(tr.max_occupancy <= 2);
        rate_check(
            &RateAudit::batched(regime, 4, 50),
            tr.transcript.as_ref().unwrap(),
        )
        .unwrap();
    }
}

#[test]
fn batched_rejects_single_slot_with_delays() {
    let inst = gap_instance(50, 2, DelaySpec::Fixed { d: 3 }, 0);
    assert!(run_batched(&inst, Regime::Bandit, 1, None, 0, &opts()).is_err());
    assert!(run_batched(&inst, Regime::Bandit, 2, Some(2), 0, &opts()).is_err());
    let inst = gap_instance(50, 2, DelaySpec::Fixed { d: 0 }, 0);
    assert!(run_batched(&inst, Regime::Bandit, 1, None, 0, &opts()).is_ok());
}

#[test]
fn mismatched_pairings_are_rejected() {
    let inst = gap_instance(20, 2, DelaySpec::Fixed { d: 1 }, 0);
    let bad = [
        (SchedulerConfig::bernoulli(4, 1.0), RateKind::NcpBandit),
        (SchedulerConfig::proxy(4, 1.0), RateKind::CnpBandit),
        (SchedulerConfig::fixed_p(4, 0.5), RateKind::CnpBandit),
        (SchedulerConfig::bernoulli(4, 1.0), RateKind::BatchBandit),
    ];
    for (cfg, rates) in bad {
        let err = run_scheduled(
            &inst,
            Regime::Bandit,
            &ScheduledParams::new(cfg, rates),
            0,
            &opts(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Pairing { .. }), "{err}");
    }
    let params = ScheduledParams::new(SchedulerConfig::bernoulli(4, 1.0), RateKind::CnpFullinfo);
    assert!(run_scheduled(&inst, Regime::Bandit, &params, 0, &opts()).is_err());
    assert!(run_baseline(&inst, Regime::Bandit, RateKind::CnpBandit, 0, &opts()).is_err());
}

#[test]
fn ncp_rejects_understated_delay_bound() {
    let inst = gap_instance(50, 2, DelaySpec::Fixed { d: 5 }, 0);
    let params = ScheduledParams {
        d_max: Some(4),
        ..ScheduledParams::new(SchedulerConfig::proxy(4, 1.0), RateKind::NcpBandit)
    };
    assert!(run_scheduled(&inst, Regime::Bandit, &params, 0, &opts()).is_err());
}

#[test]
fn rate_check_passes_on_every_runner() {
    for regime in REGIMES {
        for seed in 0..3 {
            let inst = gap_instance(1500, 3, DelaySpec::Geometric { mean: 8.0 }, seed);
            for (name, tr, audit) in all_runs(&inst, regime, seed) {
                rate_check(&audit, tr.transcript.as_ref().unwrap())
                    .unwrap_or_else(|e| panic!("{name} {regime:?}: {e}"));
            }
        }
    }
}

#[test]
fn rate_check_reports_tampered_round() {
    let inst = gap_instance(200, 3, DelaySpec::Fixed { d: 4 }, 1);
    for (name, tr, audit) in all_runs(&inst, Regime::Bandit, 1) {
        if name == "fixed_p" {
            continue;
        }
        let mut rows: Vec<TranscriptRow> = tr.transcript.unwrap().rows().to_vec();
        rows[99].beta_inv = f64::from_bits(rows[99].beta_inv.to_bits() + 1);
        let err =
            rate_check(&audit, &delaysched::learners::Transcript::from_rows(rows)).unwrap_err();
        match err {
            Error::RateAudit { round, .. } => assert_eq!(round, 100, "{name}"),
            other => panic!("{name}: unexpected {other}"),
        }
    }
}

#[test]
fn cumulative_estimate_telescopes() {
    for regime in REGIMES {
        let inst = gap_instance(1500, 4, DelaySpec::Uniform { min: 0, max: 30 }, 6);
        for (name, tr, _) in all_runs(&inst, regime, 6) {
            let oracle = telescoped_estimate(&inst, regime, tr.transcript.as_ref().unwrap());
            assert_eq!(oracle, tr.final_estimate, "{name} {regime:?}");
        }
    }
}

#[test]
fn pending_plays_respect_memory_bounds() {
    let inst = gap_instance(3000, 3, DelaySpec::Geometric { mean: 20.0 }, 3);
    let sigma_max = delay_stats(&inst).sigma_max;
    for regime in REGIMES {
        for (name, tr, _) in all_runs(&inst, regime, 2) {
            let bound = match tr.capacity {
                _ if name.starts_with("baseline") => sigma_max + 1,
                Some(c) => c,
                None => unreachable!(),
            };
            assert!(
                tr.max_pending <= bound,
                "{name}: {} > {bound}",
                tr.max_pending
            );
            assert!(tr.max_occupancy <= bound, "{name}");
        }
    }
}

#[test]
fn scheduler_is_blind_to_learner_stream() {
    let inst = gap_instance(2000, 3, DelaySpec::Geometric { mean: 10.0 }, 1);
    for regime in REGIMES {
        let param_sets = [
            ScheduledParams::new(SchedulerConfig::bernoulli(6, 1.0), cnp(regime)),
            ScheduledParams::new(SchedulerConfig::proxy(6, 1.0), ncp(regime)),
            fixed_params(regime, 6, 0.3),
        ];
        for params in param_sets {
            let z = |learner_seed| {
                let o = RunOptions {
                    learner_seed: Some(learner_seed),
                    ..opts()
                };
                let tr = run_scheduled(&inst, regime, &params, 77, &o).unwrap();
                let rows = tr.transcript.unwrap().rows().to_vec();
                (
                    rows.iter()
                        .map(|r| (r.admitted, r.observed))
                        .collect::<Vec<_>>(),
                    rows.iter().map(|r| r.action).collect::<Vec<_>>(),
                )
            };
            let (z1, a1) = z(1);
            let (z2, a2) = z(2);
            assert_eq!(z1, z2);
            assert_ne!(a1, a2);
        }
    }
}

#[test]
fn learner_actions_agree_until_deliveries_differ() {
    let inst = gap_instance(2000, 3, DelaySpec::Geometric { mean: 10.0 }, 1);
    for regime in REGIMES {
        for params in [
            ScheduledParams::new(SchedulerConfig::bernoulli(6, 1.0), cnp(regime)),
            ScheduledParams::new(SchedulerConfig::proxy(6, 1.0), ncp(regime)),
        ] {
            let run = |master| {
                let o = RunOptions {
                    learner_seed: Some(5),
                    ..opts()
                };
                run_scheduled(&inst, regime, &params, master, &o)
                    .unwrap()
                    .transcript
                    .unwrap()
            };
            let (a, b) = (run(10), run(20));
            let first_diff = a
                .rows()
                .iter()
                .zip(b.rows())
                .position(|(x, y)| x.delivered != y.delivered)
                .expect("scheduler seeds should change some delivery");
            for t in 0..=first_diff {
                assert_eq!(a.rows()[t].action, b.rows()[t].action, "round {}", t + 1);
            }
        }
    }
}

#[test]
fn expectation_capacity_hard_capacity_values() {
    assert_eq!(expectation_capacity(Regime::Bandit, 10_000, 3), 28);
    assert_eq!(expectation_capacity(Regime::Bandit, 10_000, 4), 37);
    assert_eq!(expectation_capacity(Regime::FullInfo, 10_000, 4), 28);
}

#[test]
fn expectation_capacity_first_round_probability() {
    let params =
        expectation_capacity_params(Regime::Bandit, 10_000, 3, 0.5, Policy::BernoulliClairvoyant)
            .unwrap();
    let cfg = params.scheduler;
    assert_eq!(cfg.capacity, 28);
    assert_eq!(cfg.alpha, 1.0);
    assert_eq!(cfg.nu_multiplier, 56.0);
    for d in [0usize, 1, 3, 10, 100] {
        let expected = (0.125 / (d as f64 + 1.0)).min(1.0);
        assert!((cfg.probability(1.0, d) - expected).abs() < 1e-15);
    }
}

#[test]
fn large_expectation_capacity_matches_plain_scheduler() {
    let inst = gap_instance(1500, 3, DelaySpec::Geometric { mean: 12.0 }, 4);
    for regime in REGIMES {
        for (policy, rates) in [
            (Policy::BernoulliClairvoyant, cnp(regime)),
            (Policy::ParetoProxy, ncp(regime)),
        ] {
            let c = expectation_capacity(regime, inst.horizon(), 3);
            let e = run_expectation_capacity(&inst, regime, c as f64 + 0.5, policy, 8, &opts())
                .unwrap();
            let cfg = SchedulerConfig {
                policy,
                ..SchedulerConfig::bernoulli(c, 1.0)
            };
            let plain = run_scheduled(&inst, regime, &ScheduledParams::new(cfg, rates), 8, &opts())
                .unwrap();
            assert_eq!(e, plain);
        }
    }
}

#[test]
fn fixed_p_recipe_values() {
    let r = fixed_p_recipe(Regime::Bandit, 10, 10_000, 4, 100_000).unwrap();
    assert!((r.p - 0.069_144_590_195_661_67).abs() < 1e-12);
    assert_eq!(r.effective_capacity, 10.0);
    let alpha = (10.0 * 2.0 / (1e4 * 1.1e5f64)).cbrt();
    assert!((1.0 / r.weights.inv_alpha() - alpha).abs() < 1e-15);
    assert!((1.0 / r.weights.inv_beta() - (4f64.ln() / 1.1e5).sqrt()).abs() < 1e-15);

    // Capacities beyond the validity range are clamped so that p stays 1.
    let r = fixed_p_recipe(Regime::Bandit, 10_000, 100, 4, 0).unwrap();
    assert_eq!(r.effective_capacity, 5.0);
    assert!((r.p - 1.0).abs() < 1e-12);

    let r = fixed_p_recipe(Regime::FullInfo, 10, 10_000, 4, 100_000).unwrap();
    assert_eq!(r.weights.inv_alpha(), 0.0);
    let ln_k = 4f64.ln();
    assert!((r.p - (100.0 * 1e4 * ln_k / 1.21e10).cbrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_are_consistent(
        seed in 0u64..1000,
        horizon in 1usize..80,
        k in 2usize..5,
        max_delay in 0usize..12,
        full_info in any::<bool>(),
    ) {
        let regime = if full_info { Regime::FullInfo } else { Regime::Bandit };
        let inst = gap_instance(horizon, k, DelaySpec::Uniform { min: 0, max: max_delay }, seed);
        for (name, tr, audit) in all_runs(&inst, regime, seed) {
            let transcript = tr.transcript.as_ref().unwrap();
            prop_assert!(rate_check(&audit, transcript).is_ok(), "{}", name);
            prop_assert_eq!(telescoped_estimate(&inst, regime, transcript), tr.final_estimate.clone());
            prop_assert!(transcript.rows().windows(2).all(|w| w[0].cum_loss <= w[1].cum_loss));
            for cp in &tr.checkpoints {
                prop_assert_eq!(cp.regret, cp.player_loss - cp.best_loss);
            }
            if let Some(c) = tr.capacity {
                prop_assert!(tr.max_occupancy <= c);
            }
            prop_assert_eq!(tr.final_checkpoint().t, horizon);
        }
    }
}
