//! Crate-wide error type.
//!
//! Variants map one-to-one onto the error classes the CLI reports as exit
//! codes, so every fallible operation in the crate describes its failure in
//! terms a caller can route on.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's preconditions.
    #[error("validation: {0}")]
    Validation(String),

    /// A configured value (dimension, backend, path) is inconsistent.
    #[error("configuration: {0}")]
    Configuration(String),

    /// Transport failed after the configured number of attempts.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Retryable { attempts: u32, message: String },

    /// The backend answered, but its payload was not understood.
    #[error("protocol: {0}")]
    Protocol(String),

    /// A persisted file could not be parsed; names the offending line.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Durable storage could not be written or read.
    #[error("storage: {0}")]
    Storage(String),

    /// A structured model response stayed malformed after the repair attempt.
    #[error("format: {0}")]
    Format(String),

    /// Persisted run state disagrees with the artifacts on disk.
    #[error("consistency: {0}")]
    Consistency(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// Idea search could not produce a single candidate.
    #[error("search failed: {message}")]
    Search { message: String },

    /// The execution sandbox could not be prepared.
    #[error("setup: {0}")]
    Setup(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category name, used for CLI exit codes and event logs.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Configuration(_) => "configuration",
            Error::Retryable { .. } => "retryable",
            Error::Protocol(_) => "protocol",
            Error::Parse { .. } => "parse",
            Error::Storage(_) => "storage",
            Error::Format(_) => "format",
            Error::Consistency(_) => "consistency",
            Error::NotFound(_) => "not-found",
            Error::Search { .. } => "search",
            Error::Setup(_) => "setup",
            Error::Io(_) => "io",
        }
    }
}
