use thiserror::Error;

pub type Result<T, E = RefineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Core(#[from] sgh_core::Error),

    #[error("mesh `{0}` is not watertight")]
    NotWatertight(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}
