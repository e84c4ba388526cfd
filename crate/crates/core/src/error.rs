use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("objective vector {point:?} does not strictly dominate reference {reference:?}")]
    ReferenceViolation { point: Vec<f64>, reference: Vec<f64> },

    #[error("unsupported operation for {kind}: {detail}")]
    Unsupported { kind: String, detail: String },

    #[error("infeasible solution: {0}")]
    Infeasible(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
