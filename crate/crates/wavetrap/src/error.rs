use thiserror::Error;

/// Failures reported by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{name} = {value} lies outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("quadrature validation failed at degree {degree}: relative error {error:.3e}")]
    QuadratureValidation { degree: usize, error: f64 },

    #[error("linear solve failed (condition estimate {condition:.3e})")]
    LinearSolve { condition: f64 },

    #[error("Newton iteration stalled after {iterations} steps with |Phi| = {residual:.3e}")]
    NewtonStalled { iterations: usize, residual: f64 },

    #[error("rotation regime left: cos(theta_{index}) = {cos:.6}")]
    RegimeViolation { index: usize, cos: f64 },

    #[error("quadratic form is negative on the stable subspace: {value:.3e}")]
    Coercivity { value: f64 },

    #[error("ODE integration failed at xi = {at}: {reason}")]
    Integration { at: f64, reason: String },

    #[error("no blow-up detected: {0}")]
    NoBlowup(String),

    #[error("instability at time {at}: {reason}")]
    Instability { at: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
