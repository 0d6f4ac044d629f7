//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown token `{0}` not present in vocabulary")]
    UnknownToken(String),

    #[error("caption has {len} tokens but max_len is {max_len}")]
    CaptionTooLong { len: usize, max_len: usize },

    #[error("invalid caption structure: {0}")]
    BadCaption(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("split ratios must sum to 1 (got {0})")]
    BadRatios(f64),

    #[error("dataset must contain at least one clip")]
    EmptyDataset,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid config value for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("dataset/config dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("vocabulary mismatch: checkpoint expects {expected} entries, dataset has {actual}")]
    VocabMismatch { expected: usize, actual: usize },

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("non-deterministic loss: two evaluations at the same point differ")]
    NonDeterministicLoss,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
