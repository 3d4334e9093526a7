use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{DelaySpec, InstanceSpec, LossSpec};
use crate::error::{Error, Result};
use crate::learners::{validate_pairing, RateFamily, RateKind, Regime};
use crate::schedulers::Policy;

/// Instance family of an experiment; the horizon comes from the sweep and
/// the seed from the run index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceTemplate {
    pub actions: usize,
    pub delay: DelaySpec,
    pub loss: LossSpec,
}

impl InstanceTemplate {
    pub fn spec(&self, horizon: usize, seed: u64) -> InstanceSpec {
        InstanceSpec {
            horizon,
            actions: self.actions,
            delay: self.delay.clone(),
            loss: self.loss.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Baseline,
    Batched,
    Scheduled,
    Expectation,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::Batched => "batched",
            Algorithm::Scheduled => "scheduled",
            Algorithm::Expectation => "expectation",
        }
    }
}

fn default_seeds() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// One `[experiment.<name>]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub regime: Regime,
    /// Scheduler for `scheduled` and `expectation` runs.
    #[serde(default)]
    pub policy: Option<Policy>,
    /// Rate schedule; defaults to the one matching the algorithm and policy.
    #[serde(default)]
    pub rates: Option<RateKind>,
    /// Capacity sweep (`batched`, `scheduled`).
    #[serde(default)]
    pub capacities: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Expectation-capacity sweep (`expectation`).
    #[serde(default)]
    pub expectation_capacities: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Chernoff parameter; mutually exclusive with `delta`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Target overflow probability; sets `alpha = chernoff_alpha(C, delta)`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Constant admission probability for `fixed_p`; omitted means the
    /// tuned recipe for the realized `T` and `D`.
    #[serde(default)]
    pub fixed_p: Option<f64>,
    /// `(1/α, 1/β)` for `fixed_const` rates; omitted means the recipe's.
    #[serde(default)]
    pub fixed_weights: Option<[f64; 2]>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Known delay bound for NCP rates; defaults to the family's bound.
    #[serde(default)]
    pub d_max: Option<usize>,
    /// Run the offline rate audit on every run.
    #[serde(default = "default_true")]
    pub audit_rates: bool,
    /// Write per-run transcripts and occupancy logs.
    #[serde(default)]
    pub trace: bool,
    pub instance: InstanceTemplate,
}

impl ExperimentConfig {
    /// Rate schedule used by this experiment.
    pub fn rate_kind(&self) -> Result<RateKind> {
        if let Some(r) = self.rates {
            return Ok(r);
        }
        Ok(match self.algorithm {
            Algorithm::Baseline => RateKind::BaselineSeldin,
            Algorithm::Batched => RateKind::for_regime(RateFamily::Batch, self.regime),
            Algorithm::Scheduled | Algorithm::Expectation => match self.policy {
                Some(Policy::BernoulliClairvoyant) => {
                    RateKind::for_regime(RateFamily::Cnp, self.regime)
                }
                Some(Policy::ParetoProxy) => RateKind::for_regime(RateFamily::Ncp, self.regime),
                Some(Policy::FixedP) => RateKind::FixedConst,
                None => return Err(Error::Config("a policy is required".into())),
            },
        })
    }

    fn check(&self, name: &str) -> Result<()> {
        let err = |key: &str, msg: String| Error::Config(format!("experiment.{name}.{key}: {msg}"));
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(err("horizons", "need at least one positive horizon".into()));
        }
        if self.seeds == 0 {
            return Err(err("seeds", "must be positive".into()));
        }
        if self.instance.actions < 2 {
            return Err(err("instance.actions", "need at least 2 actions".into()));
        }
        if self.alpha.is_some() && self.delta.is_some() {
            return Err(err("alpha", "set either alpha or delta, not both".into()));
        }
        let rates = self.rate_kind().map_err(|e| err("policy", e.to_string()))?;
        match self.algorithm {
            Algorithm::Baseline => {
                if rates != RateKind::BaselineSeldin && !rates.is_batch_style() {
                    return Err(err(
                        "rates",
                        format!("baseline cannot use {}", rates.name()),
                    ));
                }
            }
            Algorithm::Batched => {
                if self.capacities.is_empty() {
                    return Err(err(
                        "capacities",
                        "batched runs need a capacity sweep".into(),
                    ));
                }
                if rates != RateKind::for_regime(RateFamily::Batch, self.regime) {
                    return Err(err(
                        "rates",
                        format!("batched runs use batch rates, not {}", rates.name()),
                    ));
                }
            }
            Algorithm::Scheduled => {
                if self.capacities.is_empty() || self.capacities.contains(&0) {
                    return Err(err(
                        "capacities",
                        "scheduled runs need positive capacities".into(),
                    ));
                }
                let policy = self.policy.expect("checked by rate_kind");
                validate_pairing(policy, rates, self.regime)
                    .map_err(|e| err("rates", e.to_string()))?;
            }
            Algorithm::Expectation => {
                if self.expectation_capacities.is_empty()
                    || self
                        .expectation_capacities
                        .iter()
                        .any(|c| !(*c > 0.0 && c.is_finite()))
                {
                    return Err(err(
                        "expectation_capacities",
                        "need positive expectation capacities".into(),
                    ));
                }
                let policy = self.policy.expect("checked by rate_kind");
                if policy == Policy::FixedP {
                    return Err(err(
                        "policy",
                        "expectation runs use a Bernoulli or proxy scheduler".into(),
                    ));
                }
                validate_pairing(policy, rates, self.regime)
                    .map_err(|e| err("rates", e.to_string()))?;
            }
        }
        if let Some(p) = self.fixed_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(err("fixed_p", format!("must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("experiment config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Whole config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Output directory; overridden by the CLI flag or environment.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub experiment: BTreeMap<String, ExperimentConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every experiment, including scheduler/rate pairings, before
    /// anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_empty() {
            return Err(Error::Config("no [experiment.<name>] tables".into()));
        }
        for (name, exp) in &self.experiment {
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!(
                    "experiment name {name:?} must use [A-Za-z0-9_-]"
                )));
            }
            exp.check(name)?;
        }
        Ok(())
    }
}
