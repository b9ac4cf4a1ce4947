use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("missing dataset file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("parse error in {} at line {line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("pair construction error: {0}")]
    PairConstruction(String),

    #[error("adversarial loss needs at least one g=0 pair in the batch")]
    EmptySubset,

    #[error("freeze violation: block `{0}` changed while frozen")]
    FreezeViolation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
