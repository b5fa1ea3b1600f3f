use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A colored-noise coupling operator is not Hermitian.
    #[error("constraint violation: {what} is not Hermitian (||R - R^dagger|| = {defect:.3e})")]
    ConstraintViolation { what: String, defect: f64 },

    #[error("integration failure at step {step}{}: {reason}", trajectory.map(|t| format!(" of trajectory {t}")).unwrap_or_default())]
    IntegrationFailure {
        step: usize,
        trajectory: Option<usize>,
        reason: String,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("not estimable: {0}")]
    NotEstimable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
