use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the annealing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("spin index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trajectory diverged at inner step {step}")]
    Divergence { step: usize },

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
