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

    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("embedding store is empty")]
    EmptyStore,

    #[error("qrels contain no judgments")]
    EmptyQrels,

    #[error("document `{0}` is not indexed")]
    UnknownDocument(String),

    #[error("dimension mismatch for `{id}`: found {found}, expected {expected}")]
    DimensionMismatch { id: String, found: usize, expected: usize },

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("rephraser failed: {0}")]
    RephraserFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: bad artifact: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
