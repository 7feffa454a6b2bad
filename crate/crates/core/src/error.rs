use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },

    #[error("item {item}: {msg}")]
    InvalidItem { item: String, msg: String },

    #[error("item {item}: answer {answer:?} is not in the candidate pool")]
    DanglingIndex { item: String, answer: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },

    #[error("candidate pool is empty after filtering with min_freq={min_freq}")]
    EmptyPool { min_freq: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("only {found} candidates survive filtering, need {needed}")]
    InsufficientCandidates { found: usize, needed: usize },

    #[error("the {0} split is empty")]
    EmptySplit(&'static str),

    #[error("no failed predictions to learn from; use a weaker discriminator or a harder dataset")]
    NoFailures,

    #[error("environment {0} was modified during agent training")]
    EnvironmentMutated(String),

    #[error("agent is bound to pool {expected}, got {got}")]
    PoolMismatch { expected: String, got: String },

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }
}
