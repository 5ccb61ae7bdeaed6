//! Simulation-based inference toolkit focused on the calibration of posterior
//! approximations.
//!
//! The crate bundles implicit-likelihood benchmark simulators, amortized and
//! single-observation posterior estimators (ratio and posterior networks,
//! ensembles, rejection and sequential ABC, sequential ratio estimation) and
//! the expected-coverage diagnostic built on highest-posterior-density
//! regions.

pub mod codec;
pub mod coverage;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod simulators;
pub mod types;

pub use dataset::{bootstrap_resample, sample_joint, split_dataset, Dataset};
pub use error::{Error, Result};
pub use estimator::{EstimatorMeta, PosteriorEstimator, PriorEstimator};
pub use prior::Prior;
pub use rng::RngStream;
pub use simulators::{Benchmark, BenchmarkKind};
pub use types::{JointSample, Observable, ParameterVector};
