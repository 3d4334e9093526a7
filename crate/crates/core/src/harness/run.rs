use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, Config, ExperimentConfig};
use super::stats::{mean_std_err, wilson_interval, Z95};
use crate::env::{generate, Instance};
use crate::error::{Error, Result};
use crate::learners::{
    expectation_capacity_params, fixed_p_recipe, rate_check, run_baseline, run_batched,
    run_scheduled, Checkpoint, RateAudit, RegretTrace, RunOptions, ScheduledParams, Transcript,
};
use crate::schedulers::{chernoff_alpha, Policy, SchedulerConfig};
use crate::simplex::RegWeights;
use crate::streams::run_seed;

pub const SUMMARY_SCHEMA: &str = "# delaysched summary v1";
pub const CHECKPOINT_SCHEMA: &str = "# delaysched checkpoints v1";
pub const TIMING_SCHEMA: &str = "# delaysched timing v1";
pub const OCCUPANCY_SCHEMA: &str = "# delaysched occupancy v1";

/// One point of an experiment's sweep (one row of `summary.csv`).
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub experiment: String,
    pub label: String,
    pub horizon: usize,
    pub capacity: Option<usize>,
    pub expectation_capacity: Option<f64>,
}

/// Sweep points of an experiment, horizons outermost.
pub fn units(name: &str, exp: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::new();
    for &horizon in &exp.horizons {
        let base = Unit {
            experiment: name.to_string(),
            label: format!("{name}_T{horizon}"),
            horizon,
            capacity: None,
            expectation_capacity: None,
        };
        match exp.algorithm {
            Algorithm::Baseline => out.push(base),
            Algorithm::Batched | Algorithm::Scheduled => {
                for &c in &exp.capacities {
                    out.push(Unit {
                        label: format!("{}_C{c}", base.label),
                        capacity: Some(c),
                        ..base.clone()
                    });
                }
            }
            Algorithm::Expectation => {
                for &ce in &exp.expectation_capacities {
                    out.push(Unit {
                        label: format!("{}_CE{ce}", base.label),
                        expectation_capacity: Some(ce),
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    /// Forces per-run traces on.
    pub trace: bool,
    pub threads: Option<usize>,
}

/// Master seed and instance of run `index` of a sweep point. Runs with the
/// same base seed, index and horizon share the instance across experiments.
pub fn run_instance(exp: &ExperimentConfig, unit: &Unit, index: usize) -> Result<(u64, Instance)> {
    let master = run_seed(exp.base_seed, index as u64);
    let inst = generate(&exp.instance.spec(unit.horizon, master))?;
    Ok((master, inst))
}

fn scheduled_params(
    exp: &ExperimentConfig,
    unit: &Unit,
    inst: &Instance,
) -> Result<ScheduledParams> {
    let rates = exp.rate_kind()?;
    let policy = exp.policy.expect("validated config has a policy");
    let d_max = Some(
        exp.d_max
            .unwrap_or_else(|| exp.instance.spec(unit.horizon, 0).d_max_bound()),
    );
    if let Some(ce) = unit.expectation_capacity {
        let params =
            expectation_capacity_params(exp.regime, unit.horizon, inst.num_actions(), ce, policy)?;
        return Ok(ScheduledParams { d_max, ..params });
    }
    let capacity = unit.capacity.expect("scheduled unit has a capacity");
    let alpha = match (exp.alpha, exp.delta) {
        (_, Some(delta)) => chernoff_alpha(capacity, delta)?,
        (Some(a), None) => a,
        (None, None) => 1.0,
    };
    let mut cfg = SchedulerConfig {
        policy,
        ..SchedulerConfig::bernoulli(capacity, alpha)
    };
    let mut fixed_weights = None;
    if policy == Policy::FixedP {
        let recipe = fixed_p_recipe(
            exp.regime,
            capacity,
            unit.horizon,
            inst.num_actions(),
            inst.total_delay(),
        )?;
        cfg.fixed_p = exp.fixed_p.unwrap_or(recipe.p);
        fixed_weights = Some(match exp.fixed_weights {
            Some([a, b]) => RegWeights::new(a, b)?,
            None => recipe.weights,
        });
    }
    Ok(ScheduledParams {
        scheduler: cfg,
        rates,
        fixed_weights,
        d_max,
    })
}

/// Runs one seed of one sweep point. With `audit_rates` the run's rates are
/// recomputed offline and any mismatch is an error; the transcript is kept
/// only if `keep_transcript`.
pub fn run_unit(
    exp: &ExperimentConfig,
    unit: &Unit,
    index: usize,
    keep_transcript: bool,
) -> Result<RegretTrace> {
    let (master, inst) = run_instance(exp, unit, index)?;
    let opts = RunOptions {
        transcript: keep_transcript || exp.audit_rates,
        ..RunOptions::default()
    };
    let k = inst.num_actions();
    let rates = exp.rate_kind()?;
    let (mut trace, audit) = match exp.algorithm {
        Algorithm::Baseline => (
            run_baseline(&inst, exp.regime, rates, master, &opts)?,
            RateAudit::baseline(rates, exp.regime, k),
        ),
        Algorithm::Batched => {
            let c = unit.capacity.expect("batched unit has a capacity");
            let tr = run_batched(&inst, exp.regime, c, exp.batch_size, master, &opts)?;
            let b = tr.batch_size;
            (tr, RateAudit::batched(exp.regime, k, b))
        }
        Algorithm::Scheduled | Algorithm::Expectation => {
            let params = scheduled_params(exp, unit, &inst)?;
            let tr = run_scheduled(&inst, exp.regime, &params, master, &opts)?;
            (tr, params.audit(exp.regime, &inst))
        }
    };
    if exp.audit_rates {
        let tr = trace
            .transcript
            .as_ref()
            .expect("audited runs keep a transcript");
        rate_check(&audit, tr).map_err(|e| match e {
            Error::RateAudit { round, detail } => Error::RateAudit {
                round,
                detail: format!("{} seed {index}: {detail}", unit.label),
            },
            other => other,
        })?;
    }
    if !keep_transcript {
        trace.transcript = None;
    }
    Ok(trace)
}

/// Aggregate of one checkpoint round over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub config_hash: String,
    pub label: String,
    pub t: usize,
    pub mean_regret: f64,
    pub regret_std_err: f64,
    /// Runs with `|S_t⁰| = C`.
    pub full_runs: usize,
    pub overflow_rate: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    pub mean_occupancy: f64,
    pub occupancy_std_err: f64,
    pub mean_occupancy_after: f64,
    pub occupancy_after_std_err: f64,
    pub mean_expected_occupancy: Option<f64>,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub config_hash: String,
    pub experiment: String,
    pub label: String,
    pub algorithm: String,
    pub regime: String,
    pub policy: Option<String>,
    pub rates: String,
    pub capacity: Option<usize>,
    pub expectation_capacity: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: usize,
    pub batch_size: usize,
    pub seeds: usize,
    pub mean_regret: f64,
    pub regret_std_err: f64,
    /// Mean over seeds of the fraction of rounds with `|S_t⁰| = C`.
    pub overflow_rate: f64,
    pub mean_observed_fraction: f64,
    pub max_occupancy: usize,
}

/// Result of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitResult {
    pub summary: SummaryStats,
    pub checkpoints: Vec<CheckpointStats>,
    pub wall_clock_s: f64,
}

struct SeedResult {
    checkpoints: Vec<Checkpoint>,
    final_regret: f64,
    overflow_fraction: f64,
    observed_fraction: f64,
    max_occupancy: usize,
    batch_size: usize,
    capacity: Option<usize>,
}

fn aggregate(
    name: &str,
    exp: &ExperimentConfig,
    hash: &str,
    unit: &Unit,
    results: &[SeedResult],
) -> Result<(SummaryStats, Vec<CheckpointStats>)> {
    let n = results.len();
    let grid: Vec<usize> = results[0].checkpoints.iter().map(|c| c.t).collect();
    let mut cps = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let at: Vec<&Checkpoint> = results.iter().map(|r| &r.checkpoints[i]).collect();
        if at.iter().any(|c| c.t != t) {
            return Err(Error::Invariant(format!(
                "{}: checkpoint grids differ across seeds",
                unit.label
            )));
        }
        let regrets: Vec<f64> = at.iter().map(|c| c.regret).collect();
        let occ: Vec<f64> = at.iter().map(|c| c.occupancy as f64).collect();
        let occ_after: Vec<f64> = at.iter().map(|c| c.occupancy_after as f64).collect();
        let full = match results[0].capacity {
            Some(c) => at.iter().filter(|cp| cp.occupancy == c).count(),
            None => 0,
        };
        let expected: Option<Vec<f64>> = at.iter().map(|c| c.expected_occupancy).collect();
        let (mean_regret, regret_std_err) = mean_std_err(&regrets);
        let (mean_occupancy, occupancy_std_err) = mean_std_err(&occ);
        let (mean_occupancy_after, occupancy_after_std_err) = mean_std_err(&occ_after);
        let (wilson_lower, wilson_upper) = wilson_interval(full, n, Z95);
        cps.push(CheckpointStats {
            config_hash: hash.to_string(),
            label: unit.label.clone(),
            t,
            mean_regret,
            regret_std_err,
            full_runs: full,
            overflow_rate: full as f64 / n as f64,
            wilson_lower,
            wilson_upper,
            mean_occupancy,
            occupancy_std_err,
            mean_occupancy_after,
            occupancy_after_std_err,
            mean_expected_occupancy: expected.map(|e| mean_std_err(&e).0),
        });
    }
    let finals: Vec<f64> = results.iter().map(|r| r.final_regret).collect();
    let (mean_regret, regret_std_err) = mean_std_err(&finals);
    let summary = SummaryStats {
        config_hash: hash.to_string(),
        experiment: name.to_string(),
        label: unit.label.clone(),
        algorithm: exp.algorithm.name().to_string(),
        regime: exp.regime.name().to_string(),
        policy: exp.policy.map(|p| p.name().to_string()),
        rates: exp.rate_kind()?.name().to_string(),
        capacity: results[0].capacity,
        expectation_capacity: unit.expectation_capacity,
        delta: exp.delta,
        horizon: unit.horizon,
        batch_size: results[0].batch_size,
        seeds: n,
        mean_regret,
        regret_std_err,
        overflow_rate: mean_std_err(
            &results
                .iter()
                .map(|r| r.overflow_fraction)
                .collect::<Vec<_>>(),
        )
        .0,
        mean_observed_fraction: mean_std_err(
            &results
                .iter()
                .map(|r| r.observed_fraction)
                .collect::<Vec<_>>(),
        )
        .0,
        max_occupancy: results.iter().map(|r| r.max_occupancy).max().unwrap_or(0),
    };
    Ok((summary, cps))
}

/// Runs every seed of one sweep point (in parallel) and aggregates in seed
/// order. Writes traces into `trace_dir` when given.
pub fn run_sweep_point(
    name: &str,
    exp: &ExperimentConfig,
    unit: &Unit,
    trace_dir: Option<&Path>,
) -> Result<UnitResult> {
    let hash = exp.hash();
    let start = Instant::now();
    let results: Vec<SeedResult> = (0..exp.seeds)
        .into_par_iter()
        .map(|i| {
            let tr = run_unit(exp, unit, i, trace_dir.is_some())?;
            if let (Some(dir), Some(transcript)) = (trace_dir, tr.transcript.as_ref()) {
                transcript.write_csv(dir.join(format!("trace_{}_{i}.csv", unit.label)))?;
                write_occupancy_csv(
                    transcript,
                    dir.join(format!("occupancy_{}_{i}.csv", unit.label)),
                )?;
            }
            Ok(SeedResult {
                final_regret: tr.final_regret(),
                overflow_fraction: tr.overflow_rounds as f64 / tr.horizon as f64,
                observed_fraction: tr.observed_fraction(),
                max_occupancy: tr.max_occupancy,
                batch_size: tr.batch_size,
                capacity: tr.capacity,
                checkpoints: tr.checkpoints,
            })
        })
        .collect::<Result<_>>()?;
    let (summary, checkpoints) = aggregate(name, exp, &hash, unit, &results)?;
    Ok(UnitResult {
        summary,
        checkpoints,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// `t,occupancy,admitted,observed_round`, where `observed_round` is the
/// round the feedback of `t` arrived (empty if never).
pub fn write_occupancy_csv(tr: &Transcript, path: impl AsRef<Path>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{OCCUPANCY_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["t", "occupancy", "admitted", "observed_round"])?;
    for r in tr.rows() {
        let observed = if r.observed {
            (r.t + r.delay).to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.t.to_string(),
            r.occupancy.to_string(),
            u8::from(r.admitted).to_string(),
            observed,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path, schema: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{schema}")?;
    Ok(csv::Writer::from_writer(file))
}

/// Resolves the output directory: explicit setting, then the config file.
pub fn output_dir(cfg: &Config, settings: &RunSettings) -> PathBuf {
    settings
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs every experiment of `cfg` and writes `summary.csv`,
/// `checkpoints.csv`, `timing.csv` and the resolved `config.toml` into the
/// output directory (plus per-run traces when enabled). Outputs other than
/// `timing.csv` are byte-identical across repeated runs.
pub fn run_experiment(cfg: &Config, settings: &RunSettings) -> Result<Vec<UnitResult>> {
    let mut cfg = cfg.clone();
    for exp in cfg.experiment.values_mut() {
        if let Some(s) = settings.seeds {
            exp.seeds = s;
        }
        exp.trace |= settings.trace;
    }
    cfg.validate()?;
    let out = output_dir(&cfg, settings);
    std::fs::create_dir_all(&out)?;
    let resolved = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out.join("config.toml"), resolved)?;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = settings.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };

    let mut results = Vec::new();
    for (name, exp) in &cfg.experiment {
        for unit in units(name, exp) {
            info!("running {} ({} seeds)", unit.label, exp.seeds);
            let trace_dir = exp.trace.then_some(out.as_path());
            let r = pool.install(|| run_sweep_point(name, exp, &unit, trace_dir))?;
            info!(
                "{}: mean regret {:.3} +- {:.3} in {:.2}s",
                unit.label, r.summary.mean_regret, r.summary.regret_std_err, r.wall_clock_s
            );
            results.push(r);
        }
    }

    let mut summary = csv_writer(&out.join("summary.csv"), SUMMARY_SCHEMA)?;
    let mut checkpoints = csv_writer(&out.join("checkpoints.csv"), CHECKPOINT_SCHEMA)?;
    let mut timing = csv_writer(&out.join("timing.csv"), TIMING_SCHEMA)?;
    timing.write_record(["config_hash", "label", "seeds", "wall_clock_s"])?;
    for r in &results {
        summary.serialize(&r.summary)?;
        for cp in &r.checkpoints {
            checkpoints.serialize(cp)?;
        }
        timing.write_record([
            r.summary.config_hash.clone(),
            r.summary.label.clone(),
            r.summary.seeds.to_string(),
            format!("{:.6}", r.wall_clock_s),
        ])?;
    }
    summary.flush()?;
    checkpoints.flush()?;
    timing.flush()?;
    Ok(results)
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
