use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary payload; `offset` is the byte where decoding failed.
    #[error("byte offset {offset}: {message}")]
    Binary { offset: usize, message: String },

    /// Malformed text or JSON input.
    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    /// A record inside an otherwise well-formed file failed validation.
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty bounding box: silhouette has no foreground pixels")]
    EmptyBoundingBox,

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("non-finite value: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { context: context.into(), message: message.to_string() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}
