//! Online learning with delayed feedback when only a bounded number of
//! rounds can be tracked at once.
//!
//! - [`simplex`]: the hybrid Tsallis/entropy FTRL step and loss estimators.
//! - [`schedulers`]: precommitted admission policies over a capacity-`C`
//!   tracking set.
//! - [`learners`]: delayed FTRL without a capacity limit, with batch
//!   partitioning, and driven by a scheduler.
//! - [`env`]: loss/delay instances.
//! - [`harness`]: config-driven Monte-Carlo experiments and reports.

pub mod env;
pub mod error;
pub mod harness;
pub mod learners;
pub mod schedulers;
pub mod simplex;
pub mod streams;

pub use env::{generate, DelaySpec, Instance, InstanceSpec, LossSpec};
pub use error::{Error, Result};
pub use learners::{RateKind, Regime, RegretTrace, RunOptions};
pub use schedulers::{Policy, SchedulerConfig};
pub use simplex::{solve, CumEstimate, RegWeights, SimplexPoint};
