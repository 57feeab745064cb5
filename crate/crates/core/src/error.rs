//! Error type shared across the crate.
//!
//! Errors fall into three categories that map onto process exit codes:
//! input problems (1), provider/transport problems (2), and internal
//! invariant violations (3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A malformed record in a line-oriented input file.
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel {
        label: String,
        path: String,
        line: usize,
    },

    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        id: String,
        path: String,
        line: usize,
    },

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector has no cosine similarity")]
    ZeroNorm,

    #[error("embedding cache corruption: {0}")]
    CacheCorruption(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("combined representation for utterance {id:?} is the zero vector")]
    DegradedInput { id: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violation: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 input, 2 provider/transport, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_) => 2,
            Error::Internal(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
