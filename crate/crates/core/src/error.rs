use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: inconsistent API set (every line must list the same APIs)")]
    InconsistentApiSet { path: PathBuf, line: usize },

    /// The requested configuration cannot be satisfied (e.g. budget below the
    /// base service's cost). Maps to exit code 2 in the CLI.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("API index {index} out of range for {len} services")]
    ApiIndexOutOfRange { index: usize, len: usize },

    #[error("stream yielded a different number of items than declared: expected {expected}, got {got}")]
    StreamLength { expected: usize, got: usize },

    /// The exact reference solvers refuse instances beyond their size guards.
    #[error("instance too large for exact solving: {0}")]
    InstanceTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
