//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (dimensions, fractions, grids, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix or vector shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// A loss or intermediate value became non-finite.
    #[error("numeric error in {stage}: non-finite value {value}")]
    NonFinite { stage: String, value: f64 },

    /// Sinkhorn iterations did not reach the marginal tolerance.
    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:.3e} > {tolerance:.3e})")]
    NoConvergence {
        iterations: usize,
        violation: f64,
        tolerance: f64,
    },

    /// One side of a weighted-cloud pair carries no mass.
    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    /// Malformed input table.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    /// Argument outside the operation's domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// Too many replications failed inside an experiment.
    #[error("experiment failed: {failed} of {total} replications errored (ceiling {ceiling:.0}%)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        ceiling: f64,
    },

    /// Filesystem error annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Report (de)serialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
