use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Core(#[from] sgh_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Training hit a NaN, an infinity or an underflowed camera scale;
    /// `tensor` names the first offending value.
    #[error("non-finite or degenerate value in `{tensor}` at step {step}")]
    NonFinite { tensor: String, step: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn argument(msg: impl Into<String>) -> ModelError {
    ModelError::Core(sgh_core::Error::Argument(msg.into()))
}

pub(crate) fn config(msg: impl Into<String>) -> ModelError {
    ModelError::Config(msg.into())
}
