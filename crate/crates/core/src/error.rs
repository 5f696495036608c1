use thiserror::Error;

/// Errors produced by the explanation engine.
#[derive(Debug, Error)]
pub enum CceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("concept training failed for `{concept}`: {reason}")]
    TrainingFailure { concept: String, reason: String },

    #[error("concept bank is empty")]
    EmptyBank,

    #[error("numerical failure at step {step}: {what}")]
    NumericalFailure { step: usize, what: String },

    #[error("target concept `{0}` is not in the bank vocabulary")]
    InvalidTarget(String),

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CceError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CceError::InvalidInput(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, CceError::NumericalFailure { .. })
    }
}

pub type Result<T, E = CceError> = std::result::Result<T, E>;
