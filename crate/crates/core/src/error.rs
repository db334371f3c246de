use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading, splitting or caching interaction data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("interaction log is empty")]
    EmptyLog,
    #[error("csv error")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cache: {0}")]
    Cache(String),
    #[error("cache content hash mismatch: manifest says {expected}, content hashes to {found}")]
    HashMismatch { expected: String, found: String },
    #[error("json error")]
    Json(#[from] serde_json::Error),
}

/// Failures in model construction, checkpointing and training.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter `{0}` registered twice")]
    DuplicateParameter(String),
    #[error("parameter `{name}`: shape {expected:?} does not fit {found} values")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: usize,
    },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training split contains no records")]
    EmptyTrainingSet,
    #[error("checkpoint vocabulary hash {found} does not match dataset vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("json error")]
    Json(#[from] serde_json::Error),
}
