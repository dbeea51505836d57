use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch} (record {record})")]
    NonFiniteLoss { epoch: usize, record: usize },

    #[error("user {0:?} has no records")]
    EmptyUser(String),

    #[error("missing weights for user {0:?}")]
    MissingWeights(String),

    #[error("empty record list")]
    EmptyRecords,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("zero probability at prompt {prompt}, response {response}")]
    ZeroProbability { prompt: usize, response: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
