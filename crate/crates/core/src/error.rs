use thiserror::Error;

/// Errors raised by the solvers and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear system is not positive definite")]
    SingularSystem,

    #[error("eigensolver did not converge after {iterations} iterations (last relative change {last_change:e})")]
    EigenNotConverged { iterations: usize, last_change: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonNotConverged { iterations: usize, residual: f64 },

    #[error("lost positivity at node {node} despite damping")]
    PositivityLost { node: usize },

    #[error("epsilon continuation stagnated at level {level} (gap {gap:e})")]
    ContinuationStagnated { level: usize, gap: f64 },

    #[error("no admissible {what} constant in the dyadic search range")]
    SearchFailed { what: &'static str },

    #[error("monotone iteration did not converge after {iterations} iterations (last change {change:e})")]
    IterationCap { iterations: usize, change: f64 },

    #[error("monotonicity violated by {violation:e} at iteration {iteration}")]
    MonotonicityViolation { iteration: usize, violation: f64 },

    #[error("evolution failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bracketing violated by {violation:e} at step {step}")]
    BracketingViolation { step: usize, violation: f64 },

    #[error("{0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
