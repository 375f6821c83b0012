use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite state at node {node}")]
    NonFinite { node: usize },

    #[error("state norm {norm:e} exceeds the reachability guard {limit:e} at node {node}")]
    BlowUp { node: usize, norm: f64, limit: f64 },

    #[error("singular control undefined: |(B^2 x, psi)| = {denominator:e} is below {guard:e}")]
    SingularUndefined { denominator: f64, guard: f64 },

    #[error("global method inapplicable: {0}")]
    GlobalInapplicable(String),

    #[error("iteration stalled: objective changed by {delta:e}")]
    Stalled { delta: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
