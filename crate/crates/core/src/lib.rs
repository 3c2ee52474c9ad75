//! Sparse additive random-feature regression.
//!
//! A random feature model `f(x) = sum_j c_j phi(<x, w_j> + b_j)` with a frozen,
//! `q`-sparse hidden layer is trained by hard-thresholded sparse ridge
//! regression (HARFE): a shrunken gradient step, projection onto the `s`
//! largest coefficients, and a ridge solve restricted to that support.
//!
//! The crate is organised as
//!
//! - [`features`]: the random layer and feature matrix evaluation,
//! - [`solver`]: the HARFE iteration and its building blocks,
//! - [`model`]: the trained predictor, variable importance, persistence,
//! - [`synthetic`]: benchmark target functions and dataset generation,
//! - [`data`]: CSV ingestion, normalization, splitting and error metrics,
//! - [`diagnostics`]: restricted isometry, coherence, compressibility and
//!   convergence-rate checks,
//! - [`experiment`]: the config-driven harness behind the `harfe` binary.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod features;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod synthetic;

pub use error::{HarfeError, Result};
pub use features::{Activation, BiasDistribution, FeatureMap, FeatureMatrix, WeightDistribution};
pub use model::{HarfeModel, ImportanceHistogram, ImportanceMode};
pub use scalar::Scalar;
pub use solver::{harfe_fit, FitReport, SolverConfig, SparseCoefficients};
