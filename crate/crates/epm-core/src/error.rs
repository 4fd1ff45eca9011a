use thiserror::Error;

/// Errors shared across the solver crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An oracle produced NaN or infinity where a finite number was required.
    #[error("evaluation produced a non-finite {what}")]
    NonFiniteEvaluation { what: String },

    /// Derivatives of the requested order are not available for this problem.
    #[error("{op}: derivative order {requested} requested but only order {available} is available")]
    UnsupportedOrder {
        op: &'static str,
        requested: u8,
        available: u8,
    },

    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A vector or matrix had the wrong dimension for this problem.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The starting point handed to an iterative routine was not strictly
    /// inside the working domain.
    #[error("start point outside the working domain: {0}")]
    StartOutOfDomain(String),

    /// An inner minimization stopped before reaching its tolerance.
    #[error(
        "inner solve stopped after {iterations} iterations with gradient norm {grad_norm:.3e} (target {target:.3e})"
    )]
    InnerSolveFailure {
        iterations: usize,
        grad_norm: f64,
        target: f64,
    },

    /// No diagonal shift up to the escalation cap produced a positive
    /// definite system.
    #[error("linear system not positive definite for any shift up to {max_shift:.3e}")]
    SingularSystem { max_shift: f64 },

    /// A verification oracle exhausted its budget without reaching a fixed
    /// point.
    #[error("oracle failed to converge: {0}")]
    OracleNoConverge(String),

    /// A configuration value violated its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
