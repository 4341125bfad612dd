//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter outside its admissible region (constructor/precondition checks).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// An argument left the mathematical domain of a transform, e.g. the
    /// log-Laplace transform evaluated at x >= lambda_plus.
    #[error("domain error: {0}")]
    Domain(String),

    /// Characteristic-function inversion did not produce a usable CDF.
    #[error("cdf inversion failed: {0}")]
    InversionFailure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A loss or objective stopped being finite during optimization.
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    /// Generic numeric failure (bracketing, convergence) outside training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    MalformedFile { path: String, message: String },

    #[error("unsupported file version in {path}: found {found}, supported {supported}")]
    UnsupportedVersion {
        path: String,
        found: String,
        supported: String,
    },

    /// An option chain has no quotes left after filtering.
    #[error("no quotes left after filtering: {0}")]
    EmptyChain(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
