//! Tractable priors over the inference target.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// Independent `U(low_i, high_i)`.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    /// Independent `N(mean_i, std_i^2)`.
    IndependentNormal { mean: Vec<f64>, std: Vec<f64> },
    /// Independent log-uniform on `[low_i, high_i]`, `low_i > 0`.
    LogUniformBox { low: Vec<f64>, high: Vec<f64> },
}

impl Prior {
    pub fn uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        check_box(&low, &high, false)?;
        Ok(Prior::UniformBox { low, high })
    }

    pub fn normal(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::InvalidArgument("normal prior moments mismatch".into()));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("normal prior needs positive std".into()));
        }
        Ok(Prior::IndependentNormal { mean, std })
    }

    pub fn log_uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        check_box(&low, &high, true)?;
        Ok(Prior::LogUniformBox { low, high })
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::UniformBox { low, .. } | Prior::LogUniformBox { low, .. } => low.len(),
            Prior::IndependentNormal { mean, .. } => mean.len(),
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        if theta.len() != self.dim() || theta.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Prior::UniformBox { low, high } | Prior::LogUniformBox { low, high } => theta
                .iter()
                .zip(low.iter().zip(high))
                .all(|(t, (l, h))| *t >= *l && *t <= *h),
            Prior::IndependentNormal { .. } => true,
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            Prior::UniformBox { low, high } => -low.iter().zip(high).map(|(l, h)| (h - l).ln()).sum::<f64>(),
            Prior::LogUniformBox { low, high } => -theta
                .iter()
                .zip(low.iter().zip(high))
                .map(|(t, (l, h))| t.ln() + (h.ln() - l.ln()).ln())
                .sum::<f64>(),
            Prior::IndependentNormal { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(t, (m, s))| {
                    let z = (t - m) / s;
                    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Prior::UniformBox { low, high } => low
                .iter()
                .zip(high)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            Prior::LogUniformBox { low, high } => low
                .iter()
                .zip(high)
                .map(|(l, h)| (l.ln() + (h.ln() - l.ln()) * rng.random::<f64>()).exp().clamp(*l, *h))
                .collect(),
            Prior::IndependentNormal { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
        }
    }

    /// Exact bounds for box priors; `mean ± 8 std` for normal priors.
    /// Used as the integration and sampling domain of grid methods.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Prior::UniformBox { low, high } | Prior::LogUniformBox { low, high } => (low.clone(), high.clone()),
            Prior::IndependentNormal { mean, std } => (
                mean.iter().zip(std).map(|(m, s)| m - 8.0 * s).collect(),
                mean.iter().zip(std).map(|(m, s)| m + 8.0 * s).collect(),
            ),
        }
    }

    /// Hard support limits: `None` for unbounded coordinates.
    pub fn support(&self) -> Vec<(f64, f64)> {
        match self {
            Prior::UniformBox { low, high } | Prior::LogUniformBox { low, high } => {
                low.iter().copied().zip(high.iter().copied()).collect()
            }
            Prior::IndependentNormal { mean, .. } => {
                vec![(f64::NEG_INFINITY, f64::INFINITY); mean.len()]
            }
        }
    }
}

fn check_box(low: &[f64], high: &[f64], positive: bool) -> Result<()> {
    if low.len() != high.len() || low.is_empty() {
        return Err(Error::InvalidArgument("prior bounds length mismatch".into()));
    }
    for (l, h) in low.iter().zip(high) {
        if !(l.is_finite() && h.is_finite() && l < h) {
            return Err(Error::InvalidArgument(format!("bad prior interval [{l}, {h}]")));
        }
        if positive && *l <= 0.0 {
            return Err(Error::InvalidArgument("log-uniform bounds must be positive".into()));
        }
    }
    Ok(())
}
