use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for this input (e.g. gradient of the 0-1 loss).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An iterative routine failed to produce a finite or bracketed result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Gradient descent produced a non-finite objective.
    #[error("non-finite objective at epoch {epoch}")]
    NonFinite { epoch: usize },

    /// Inconsistent configuration: empty groups, missing columns, bad fold counts.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// One repeat of an experiment failed.
    #[error("repeat {index}: {source}")]
    Repeat {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::NonFinite { .. } => true,
            Error::Repeat { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
