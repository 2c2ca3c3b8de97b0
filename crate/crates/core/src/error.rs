use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file does not conform to its schema.
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate study_id {study_id:?} in {path} (line {line})")]
    DuplicateStudy {
        path: PathBuf,
        line: usize,
        study_id: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("{skipped} of {total} bootstrap resamples were undefined (limit is 10%)")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("corpus is empty")]
    EmptyCorpus,
}

impl Error {
    pub(crate) fn schema(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input (paths, schemas, configuration)
    /// rather than from the data failing to support a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Schema { .. } | Error::DuplicateStudy { .. } | Error::Config(_)
        )
    }
}
