//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by corpus handling, translation, training, and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("corpus integrity violation: {0}")]
    Integrity(String),

    #[error("split {0:?} has no questions")]
    EmptySplit(crate::corpus::Split),

    #[error("config error: {0}")]
    Config(String),

    #[error("translation failed: {0}")]
    Translate(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint incompatible with corpus: {0}")]
    CheckpointMismatch(String),

    #[error("missing label {0:?} in setting matrix inputs")]
    MissingLabel(String),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
