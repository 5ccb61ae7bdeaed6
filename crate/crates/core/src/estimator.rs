//! The contract every posterior approximation implements.

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::types::ParameterVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorMeta {
    pub method: String,
    pub benchmark: String,
    pub budget: usize,
    pub seed: u64,
}

impl EstimatorMeta {
    pub fn new(method: impl Into<String>, benchmark: impl Into<String>, budget: usize, seed: u64) -> Self {
        Self {
            method: method.into(),
            benchmark: benchmark.into(),
            budget,
            seed,
        }
    }
}

/// An approximation `p̂(theta | x)` that can be evaluated and sampled.
///
/// `x` is always the raw observable; estimators apply their own feature maps
/// and normalizers. Evaluation and sampling take `&self` and a caller-owned
/// stream, so fitted estimators can be shared across workers.
pub trait PosteriorEstimator: Send + Sync {
    fn meta(&self) -> &EstimatorMeta;

    fn prior(&self) -> &Prior;

    /// `log p̂(theta | x)`; `-inf` outside the prior support.
    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64>;

    fn log_density_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        thetas.iter().map(|t| self.log_density(t, x)).collect()
    }

    /// `m` draws from `p̂(. | x)`, all inside the prior support.
    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>>;

    /// Whether `log_density` integrates to one over theta.
    fn is_normalized(&self) -> bool;

    /// The single observation a non-amortized estimator was fit to.
    fn observation(&self) -> Option<&[f64]> {
        None
    }

    /// Errors when a non-amortized estimator is queried at a foreign `x`.
    fn check_observation(&self, x: &[f64]) -> Result<()> {
        match self.observation() {
            Some(xo) if xo != x => Err(Error::ObservationMismatch),
            _ => Ok(()),
        }
    }
}

impl<T: PosteriorEstimator + ?Sized> PosteriorEstimator for Box<T> {
    fn meta(&self) -> &EstimatorMeta {
        (**self).meta()
    }
    fn prior(&self) -> &Prior {
        (**self).prior()
    }
    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        (**self).log_density(theta, x)
    }
    fn log_density_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        (**self).log_density_batch(thetas, x)
    }
    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        (**self).sample(m, x, rng)
    }
    fn is_normalized(&self) -> bool {
        (**self).is_normalized()
    }
    fn observation(&self) -> Option<&[f64]> {
        (**self).observation()
    }
}

/// The prior used as a posterior: ignores `x` entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimator {
    meta: EstimatorMeta,
    prior: Prior,
}

impl PriorEstimator {
    pub fn new(benchmark: &str, prior: Prior) -> Self {
        Self {
            meta: EstimatorMeta::new("prior", benchmark, 0, 0),
            prior,
        }
    }

    pub fn set_meta(&mut self, meta: EstimatorMeta) {
        self.meta = meta;
    }
}

impl PosteriorEstimator for PriorEstimator {
    fn meta(&self) -> &EstimatorMeta {
        &self.meta
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_density(&self, theta: &[f64], _x: &[f64]) -> Result<f64> {
        Ok(self.prior.log_density(theta))
    }

    fn sample(&self, m: usize, _x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        (0..m).map(|_| ParameterVector::new(self.prior.sample(rng))).collect()
    }

    fn is_normalized(&self) -> bool {
        true
    }
}
