//! Numerical laboratory for self-similar blow-up of the vector-valued
//! one-dimensional semilinear wave equation
//! ∂²_t u = ∂²_x u + |u|^{p−1}u, u ∈ ℝ^m.
//!
//! The modules build on each other bottom-up:
//! [`weighted_space`] (grid, quadrature, norms, resolvent),
//! [`solitons`] (the stationary family and its ODE oracle),
//! [`rotations`] (the Givens-product frame),
//! [`spectral`] (linearized operators and projectors),
//! [`evolution`] (physical and self-similar solvers) and
//! [`modulation`] (frame extraction, monitors and trapping).

// `!(x > y)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod modulation;
pub mod rotations;
pub mod sampling;
pub mod solitons;
pub mod spectral;
pub mod weighted_space;

pub use error::{Error, Result};
pub use weighted_space::{HState, Params, ScalarField, VectorField, WeightedGrid};
