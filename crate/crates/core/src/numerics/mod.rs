//! Linear algebra, automatic differentiation, quasi-random sampling,
//! random streams and the Adam update.

pub mod adam;
pub mod autodiff;
pub mod cholesky;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod sobol;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use autodiff::{finite_difference_grad, grad, value_and_grad, Tape, Var};
pub use cholesky::{cholesky, cholesky_unchecked, Cholesky};
pub use matrix::{dot, Matrix};
pub use rng::{streams, RngStream};
pub use scalar::{lit, sigmoid, softplus, Real};
pub use sobol::{sobol, Sobol};
