use thiserror::Error;

/// Errors produced by the toolkit.
///
/// `Invariant` and `OracleInconsistency` indicate a bug in the library rather
/// than bad input: they fire only when a bound that holds exactly in exact
/// arithmetic is broken beyond floating-point slack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated at step {step}: {detail}")]
    Invariant { step: u64, detail: String },

    #[error("enumerating {count} deterministic policies exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u64 },

    #[error("oracle inconsistency: {0}")]
    OracleInconsistency(String),

    /// A reported check (example reproduction, oracle sweep) did not hold.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
