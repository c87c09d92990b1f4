use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt tensor {path}: {reason}")]
    CorruptTensor { path: PathBuf, reason: String },

    #[error("non-finite data in {path} at index {index}")]
    NonFinite { path: PathBuf, index: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("malformed property table {path}: {reason}")]
    PropertyTable { path: PathBuf, reason: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("id sets differ: {missing_left} id(s) only on one side, {missing_right} on the other (e.g. {examples:?})")]
    IdMismatch {
        missing_left: usize,
        missing_right: usize,
        examples: Vec<String>,
    },

    #[error("degenerate map: {0}")]
    DegenerateMap(&'static str),

    #[error("degenerate vector: {0}")]
    DegenerateVector(&'static str),

    #[error("property {0:?} has no repeated values")]
    NoRepeatedValues(String),

    #[error("unknown property {0:?}")]
    UnknownProperty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
