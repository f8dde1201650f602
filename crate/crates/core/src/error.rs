use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("invalid synthetic dataset spec: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {context}")]
    Numerical { context: String, row: Option<usize> },

    #[error("positive item set is empty")]
    EmptySupport,

    #[error("metric error: {0}")]
    Metric(String),

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch} (last good checkpoint: {best_epoch:?}): {source}")]
    TrainingAborted {
        epoch: usize,
        best_epoch: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            row: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
