use thiserror::Error;

/// Errors produced by instance generation, solving, scheduling and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("policy `{policy}` cannot be paired with rate policy `{rates}`")]
    Pairing { policy: String, rates: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("rate audit failed at round {round}: {detail}")]
    RateAudit { round: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
