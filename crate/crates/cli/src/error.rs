use sgh_model::ModelError;
use sgh_refine::RefineError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Command failures, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Argument(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<sgh_core::Error> for CliError {
    fn from(e: sgh_core::Error) -> Self {
        use sgh_core::Error as E;
        match e {
            E::Parse { .. } | E::Json(_) => CliError::Parse(e.to_string()),
            E::Structural(_) | E::Argument(_) => CliError::Argument(e.to_string()),
            E::Numerical { .. } => CliError::Numeric(e.to_string()),
            E::Io(io) => CliError::Io(io),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Core(c) => c.into(),
            ModelError::Config(_) => CliError::Argument(e.to_string()),
            ModelError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            ModelError::Checkpoint(_) | ModelError::Json(_) => CliError::Parse(e.to_string()),
            ModelError::Io(io) => CliError::Io(io),
        }
    }
}

impl From<RefineError> for CliError {
    fn from(e: RefineError) -> Self {
        match e {
            RefineError::Core(c) => c.into(),
            RefineError::NotWatertight(_) | RefineError::Argument(_) => CliError::Argument(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}
