use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::types::{Observable, ParameterVector};

pub const GAUSSIAN_DIM: usize = 4;

/// Four i.i.d. draws `N(theta, 1)`.
pub fn gaussian_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    if theta.len() != 1 {
        return Err(Error::ShapeMismatch {
            expected: 1,
            got: theta.len(),
        });
    }
    Observable::new(
        (0..GAUSSIAN_DIM)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                theta[0] + z
            })
            .collect(),
    )
}

/// Conjugate posterior of the Gaussian validation model,
/// `N(sum(x) / (d + 1), 1 / (d + 1))`, optionally with its standard deviation
/// rescaled to build deliberately miscalibrated estimators.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    meta: EstimatorMeta,
    prior: Prior,
    std_scale: f64,
}

pub fn gaussian_true_posterior() -> GaussianPosterior {
    GaussianPosterior {
        meta: EstimatorMeta::new("analytic", "gaussian", 0, 0),
        prior: Prior::normal(vec![0.0], vec![1.0]).expect("valid"),
        std_scale: 1.0,
    }
}

impl GaussianPosterior {
    pub fn with_std_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0);
        self.std_scale = scale;
        self.meta.method = format!("analytic-std-x{scale}");
        self
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / (x.len() as f64 + 1.0)
    }

    pub fn std(&self, x: &[f64]) -> f64 {
        self.std_scale / (x.len() as f64 + 1.0).sqrt()
    }
}

impl PosteriorEstimator for GaussianPosterior {
    fn meta(&self) -> &EstimatorMeta {
        &self.meta
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        if theta.len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: 1,
                got: theta.len(),
            });
        }
        if !theta[0].is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let (mu, sd) = (self.mean(x), self.std(x));
        let z = (theta[0] - mu) / sd;
        Ok(-0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
    }

    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        let (mu, sd) = (self.mean(x), self.std(x));
        (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                ParameterVector::new(vec![mu + sd * z])
            })
            .collect()
    }

    fn is_normalized(&self) -> bool {
        true
    }
}
