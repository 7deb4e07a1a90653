//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Errors produced by any layer of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller violated an operation's contract (precondition or argument
    /// validation failure).
    #[error("contract error: {0}")]
    Contract(String),

    /// An object was used in a state that forbids the operation
    /// (e.g. backward on an already-frozen tape).
    #[error("state error: {0}")]
    State(String),

    /// A file or byte stream does not match the expected format.
    #[error("format error: {msg}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Format { msg: String, line: Option<usize> },

    /// Input bytes are not valid UTF-8.
    #[error("encoding error: invalid UTF-8 at byte offset {offset} in {path:?}")]
    Encoding { path: PathBuf, offset: usize },

    /// A referenced language, key or option is not part of the configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two artifacts that must belong together do not (e.g. checkpoint
    /// saved against a different vocabulary).
    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format { msg: msg.into(), line: None }
    }

    pub fn format_at(msg: impl Into<String>, line: usize) -> Self {
        Error::Format { msg: msg.into(), line: Some(line) }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn compatibility(msg: impl Into<String>) -> Self {
        Error::Compatibility(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
