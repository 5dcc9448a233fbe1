//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("network parameters are not initialized")]
    Uninitialized,

    #[error("no cached forward pass; run a training-mode forward before backward")]
    NoForwardCache,

    #[error("missing gradient for {0}; run backward first")]
    MissingGrad(String),

    #[error("{path}: invalid {field}: {message}")]
    Format {
        path: String,
        field: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed at epoch {epoch}: {message}")]
    Stage {
        stage: String,
        epoch: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(
        path: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
