use thiserror::Error;

/// Errors raised by a single domain transition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("{0}")]
    Invalid(String),
    #[error("blocked after {at_step} forward steps")]
    Blocked { at_step: usize },
    #[error("orientation is undetermined")]
    UndeterminedOrientation,
    #[error("action belongs to a different domain than the state")]
    DomainMismatch,
}

impl ActionError {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        ActionError::Invalid(reason.into())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action at index {index}: {reason}")]
    InvalidAction { index: usize, reason: ActionError },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {id} failed validation: {details}")]
    Validation { id: String, details: String },
    #[error("route never moves; cannot resolve a relative start orientation")]
    DegenerateRoute,
    #[error("no valid action from any sampled start state after {retries} retries")]
    GenerationStuck { retries: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("attention over an empty key list")]
    EmptyKeys,
    #[error("target {0} is masked out")]
    MaskedTarget(usize),
    #[error("beam search found no complete hypothesis")]
    EmptyBeam,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
