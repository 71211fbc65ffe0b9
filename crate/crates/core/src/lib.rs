//! Multi-fidelity data fusion: a probabilistic three-block network
//! (Pro-NDF), latent-map Gaussian processes, neural baselines, analytic
//! benchmarks and the evaluation tooling around them.
//!
//! Everything numeric is generic over `T: Real` (`f32` or `f64`); the
//! aliases below fix `T = f64`.

pub mod baselines;
pub mod benchmarks;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod lmgp;
pub mod neural;
pub mod numerics;
pub mod prondf;

pub use error::{Error, Result};

/// Double-precision aliases for the generic types.
pub type Matrix = numerics::Matrix<f64>;
pub type MixedDataset = data::MixedDataset<f64>;
pub type MixedInput = data::MixedInput<f64>;
pub type Standardizer = data::Standardizer<f64>;
pub type LmgpModel = lmgp::LmgpModel<f64>;
pub type ProNdfModel = prondf::ProNdfModel<f64>;
pub type FfnnFusionModel = baselines::FfnnFusionModel<f64>;
pub type SmfModel = baselines::SmfModel<f64>;
pub type FittedModel = evaluation::FittedModel<f64>;
