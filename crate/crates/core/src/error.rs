use thiserror::Error;

use crate::backend::BackendError;
use crate::config::ConfigError;
use crate::eval::EvalError;
use crate::ingest::IngestError;
use crate::kg::KgError;
use crate::policy::PolicyError;
use crate::prompt::PromptError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().display().to_string(), message: message.into() }
    }

    /// Process exit code: 2 for configuration/precondition problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Kg(KgError::Config(_)) => 2,
            Error::Eval(EvalError::MissingPosterior) => 2,
            _ => 1,
        }
    }
}
