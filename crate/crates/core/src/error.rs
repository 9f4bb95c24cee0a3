use thiserror::Error;

/// Errors raised across the decoder, simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An enumeration or dense construction would exceed its size guard.
    #[error("size guard exceeded: {what} needs {requested}, limit is {limit}")]
    Size { what: &'static str, requested: u128, limit: u128 },

    /// The trellis admits no path consistent with the emissions.
    #[error("no admissible path through the trellis")]
    NoPath,

    /// Every error class of an adaptive schedule was tried without acceptance.
    #[error("decode failure: all {classes} error classes exhausted")]
    DecodeFailure { classes: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
