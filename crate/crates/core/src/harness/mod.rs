//! Experiment configuration, Monte-Carlo driver and reports.
//!
//! A config file holds one `[experiment.<name>]` table per experiment:
//!
//! ```toml
//! out = "results"
//!
//! [experiment.batched_scaling]
//! algorithm = "batched"          # baseline | batched | scheduled | expectation
//! regime = "bandit"              # bandit | fullinfo
//! capacities = [3]
//! horizons = [2048, 4096, 8192, 16384]
//! seeds = 100
//! base_seed = 1
//!
//! [experiment.batched_scaling.instance]
//! actions = 4
//! delay = { kind = "fixed", d = 50 }
//! loss = { kind = "stochastic_gap", gap = 0.25 }
//! ```

mod config;
mod report;
mod run;
mod stats;

pub use config::{Algorithm, Config, ExperimentConfig, InstanceTemplate};
pub use report::{report_dir, OverflowFlag, Report, ScalingRow};
pub use run::{
    output_dir, run_experiment, run_instance, run_sweep_point, run_unit, units,
    write_occupancy_csv, CheckpointStats, RunSettings, SummaryStats, Unit, UnitResult,
    CHECKPOINT_SCHEMA, OCCUPANCY_SCHEMA, SUMMARY_SCHEMA, TIMING_SCHEMA,
};
pub use stats::{
    mean_std_err, overflow_report, scaling_report, wilson_interval, OverflowPoint, ScalingFit, Z95,
};
