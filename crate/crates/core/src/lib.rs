//! Growth-rate, variance, Sharpe-ratio and ridge analysis of fixed-fraction
//! (Kelly-type) betting strategies, with optimizers, dependent-return and
//! continuous-time models, and seeded Monte Carlo verification of the
//! associated limit theorems.

pub mod ct_models;
pub mod dependent;
pub mod empirics;
pub mod error;
pub mod exec;
pub mod hf_compound;
pub mod metrics;
pub mod optimize;
pub mod quadrature;
pub mod return_models;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use exec::Execution;
pub use metrics::{Estimate, Estimator, MetricsConfig, RiskProfile};
pub use quadrature::QuadratureSpec;
pub use return_models::{ModelCapabilities, ModelSpec, ReturnDistribution};
