use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("generator is not ergodic: {0}")]
    NonErgodic(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("horizon {horizon} does not exceed burn-in {burn_in}")]
    InsufficientHorizon { horizon: f64, burn_in: f64 },
    #[error("observation levels coincide (h1 = h2); two-state closed form undefined")]
    DegenerateObservation,
    #[error("argument {0} outside the open unit interval")]
    DomainError(f64),
    #[error("initial conditions coincide; wedge is identically zero")]
    DegenerateWedge,
    #[error("filter distance collapsed to exactly zero")]
    DegenerateRun,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
