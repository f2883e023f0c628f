use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurvError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown mean function `{0}`")]
    UnknownMean(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate quantity: {0}")]
    Degenerate(String),
    #[error("not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
}

pub type Result<T> = std::result::Result<T, CurvError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CurvError::Invalid(msg.into()))
}
