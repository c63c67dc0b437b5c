use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GarecError>;

#[derive(Debug, Error)]
pub enum GarecError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: rating {rating} outside 1..=5")]
    RatingOutOfRange { line: usize, rating: i64 },

    #[error("line {line}: duplicate rating for user {user} item {item}")]
    DuplicatePair { line: usize, user: String, item: String },

    #[error("no records")]
    Empty,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {what} expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-positive observed rating {rating} at user {user} item {item}")]
    NonPositiveRating { user: usize, item: usize, rating: f64 },

    #[error("non-finite gradient in {tensor} at index {index}")]
    NonFiniteGradient { tensor: String, index: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {found} not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GarecError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GarecError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(what: impl Into<String>, expected: usize, found: usize) -> Self {
        GarecError::Dimension {
            what: what.into(),
            expected,
            found,
        }
    }
}
