//! Complex semilinear heat blow-up ∂ₜu = Δu + uᵖ: closed-form profiles, a
//! similarity-variable solver, spectral diagnostics and numeric identity checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod params;
pub mod rhs;
pub mod scalar;
pub mod solver;
pub mod verifier;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use params::{make_params, Params};
pub use scalar::Scalar;

pub type Params64 = Params<f64>;
pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
