use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("assumption violated: state {state} is not identifiable (d = {gap:e})")]
    AssumptionViolated { state: usize, gap: f64 },

    #[error("non-finite log-likelihood for state {state}{}", observation.map(|o| format!(" at observation {o}")).unwrap_or_default())]
    NonFiniteLikelihood { state: usize, observation: Option<f64> },

    #[error("all posterior mass is zero")]
    ZeroPosterior,

    #[error("reference state has zero mass")]
    ReferenceZeroMass,

    #[error("prior contains zero mass at state {0}; the log-domain discount is undefined")]
    ZeroPrior(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("state index {state} out of range for {states} states")]
    StateOutOfRange { state: usize, states: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("C undefined: log-likelihood ratio bound requires bounded support")]
    UnboundedSupport,

    #[error("bound unavailable: {0}")]
    BoundUnavailable(String),

    #[error("fixed point not in correct-learning region (max component {0})")]
    NotCorrectLearning(f64),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
