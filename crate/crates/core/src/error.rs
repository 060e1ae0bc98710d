use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("insufficient data: {rows} usable rows but at least {required} are needed")]
    InsufficientData { rows: usize, required: usize },

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupted draw store at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("draw store version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical(message.into())
    }

    pub(crate) fn dimension(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Errors caused by bad user input, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InsufficientData { .. }
                | Error::Pattern(_)
                | Error::Dimension(_)
                | Error::Domain(_)
                | Error::Config(_)
        )
    }
}
