use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use delaysched::harness::{output_dir, report_dir, run_experiment, Config, RunSettings};
use log::info;

#[derive(Parser)]
#[command(
    name = "delaysched",
    version,
    about = "Delayed-feedback learning under a tracking capacity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file and write CSV results.
    Run {
        config: PathBuf,
        /// Seeds per sweep point (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long, env = "DELAYSCHED_OUT")]
        out: Option<PathBuf>,
        /// Write per-run transcripts and occupancy logs.
        #[arg(long)]
        trace: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a results directory: per-configuration regret, regret
    /// exponents over horizon sweeps, overflow flags.
    Report { dir: PathBuf },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seeds,
            out,
            trace,
            threads,
        } => {
            let cfg =
                Config::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let settings = RunSettings {
                seeds,
                out,
                trace,
                threads,
            };
            let dir = output_dir(&cfg, &settings);
            run_experiment(&cfg, &settings)?;
            info!("results written to {}", dir.display());
            print!("{}", report_dir(&dir)?);
        }
        Command::Report { dir } => {
            let report = report_dir(&dir)
                .with_context(|| format!("reading results in {}", dir.display()))?;
            print!("{report}");
        }
    }
    Ok(())
}
