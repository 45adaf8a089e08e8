use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the annotation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input line; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An offset or index lies outside the text or unit sequence it refers to.
    #[error("range error: {0}")]
    Range(String),

    /// Two redundant encodings of the same data disagree.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// The caller violated a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Model or checkpoint configuration is invalid or does not match the data.
    #[error("config error: {0}")]
    Config(String),

    /// A non-finite value appeared during training.
    #[error("numerical error in {location}: {message}")]
    Numerical { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than misuse.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Range(_)
                | Error::Consistency(_)
                | Error::Numerical { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
