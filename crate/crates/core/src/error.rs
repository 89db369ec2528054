//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A record in a line-delimited input could not be parsed.
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    /// An input value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A document id was not found in the index or catalog.
    #[error("unknown document id: {0}")]
    UnknownDoc(String),

    /// Tensor or feature dimensions disagree with the configuration.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A gradient became NaN or infinite during training.
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    /// A persisted file has the wrong magic, version, or layout.
    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// A malformed-record error carrying its 1-based line number.
    pub fn record(line: usize, message: impl Into<String>) -> Self {
        Error::Record {
            line,
            message: message.into(),
        }
    }
}
