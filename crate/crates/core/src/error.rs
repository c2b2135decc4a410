use std::path::PathBuf;

use crate::backend::BackendKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },

    #[error("empty scoring target: every token weight is zero")]
    EmptyTarget,

    #[error("no candidates to choose from")]
    NoCandidates,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a {expected} backend, got {actual}")]
    WrongKind { expected: BackendKind, actual: BackendKind },

    #[error("sequence of {len} tokens exceeds the backend limit of {max}")]
    Overlength { len: usize, max: usize },

    #[error("position {0} is out of range or a special marker")]
    BadPosition(usize),

    #[error("fixture has no entry for tokens {0:?}")]
    FixtureMiss(Vec<String>),

    #[error("malformed fixture: {0}")]
    Fixture(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("invalid instance {id}: {reason}")]
    InvalidInstance { id: String, reason: String },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("schema mismatch in {path}: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("reports are not paired: {0}")]
    Unpaired(String),

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::WrongKind { .. } | Error::Unsupported(_) | Error::UnknownDataset(_) | Error::InvalidArgument(_)
        )
    }
}
