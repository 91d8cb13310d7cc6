use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("embedding lookup failed: no vector for document {id:?} sentence {index}")]
    MissingEmbedding { id: String, index: usize },

    #[error("embedding cache format error: {0}")]
    CacheFormat(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite values encountered in {0}")]
    NonFinite(String),

    #[error("non-finite training loss at step {step}: L_match={l_match} L_contra={l_contra} L_diff={l_diff}")]
    Divergence {
        step: usize,
        l_match: f64,
        l_contra: f64,
        l_diff: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by numerical failure rather than bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Divergence { .. })
    }
}
