use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver failure: {message} (residual {residual:e})")]
    SolverFailure { message: String, residual: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("could not extract a feasible point from the relaxation: {message}")]
    Extraction {
        message: String,
        best: Vec<f64>,
        max_violation: f64,
    },

    #[error("precondition violated: {message} (max violation {max_violation:e})")]
    Precondition { message: String, max_violation: f64 },

    #[error("no certificate for epsilon = {requested:e}; smallest feasible epsilon found: {smallest_feasible:?}")]
    EpsilonTooSmall {
        requested: f64,
        smallest_feasible: Option<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
