use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate document id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid month tag {0:?}, expected YYYY-MM")]
    InvalidMonth(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("embedding request failed for {} input(s) after retries: {message}", failed_indices.len())]
    EmbeddingFailed {
        failed_indices: Vec<usize>,
        message: String,
    },

    #[error("embedding dimension mismatch for model {model_id}: expected {expected}, got {actual}")]
    DimensionMismatch {
        model_id: String,
        expected: usize,
        actual: usize,
    },

    #[error("chat request {request_id} failed: {message}")]
    Chat { request_id: String, message: String },

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("cache file {path} is corrupt: {message}")]
    CorruptCache { path: PathBuf, message: String },

    #[error("could not parse model output: {0}")]
    Parse(String),

    #[error("malformed taxonomy file at {path}: {message}")]
    Taxonomy { path: String, message: String },

    #[error("level {level}: no clusters among {inputs} input(s)")]
    NoClusters { level: usize, inputs: usize },

    #[error("no valid level for silhouette (each level needs at least two clusters)")]
    NoValidLevel,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
