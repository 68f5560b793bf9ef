use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QnsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("extraction failure: {0}")]
    ExtractionFailure(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

pub type Result<T> = std::result::Result<T, QnsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(QnsError::InvalidInput(msg.into()))
}
