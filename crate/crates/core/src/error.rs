use thiserror::Error;

/// Errors produced by the estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("support enumeration too large: {count} supports exceeds the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("no supports to average over")]
    NoSupports,

    #[error("dictionary is not unitary: max |D^T D - I| = {0:e}")]
    NotUnitary(f64),

    #[error("MAP threshold undefined: {0}")]
    ThresholdUndefined(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown config key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("image format: {0}")]
    ImageFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(message.into()))
}
