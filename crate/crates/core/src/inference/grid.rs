use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::ParameterVector;

/// Batched log density over grid cell centres.
pub type BatchLogDensity<'a> = dyn Fn(&[ParameterVector]) -> Result<Vec<f64>> + 'a;

/// A density tabulated at the centres of a regular grid over a box,
/// normalized to cell probabilities.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub resolution: usize,
    /// Cell probabilities, last dimension fastest.
    pub masses: Vec<f64>,
    /// Log density at each cell centre as supplied.
    pub log_values: Vec<f64>,
    /// `log` of the Riemann sum of `exp(log_density)` over the box.
    pub log_integral: f64,
}

fn cell_centres(low: &[f64], high: &[f64], resolution: usize) -> Result<Vec<ParameterVector>> {
    let d = low.len();
    let total = resolution.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for j in (0..d).rev() {
                let k = idx % resolution;
                idx /= resolution;
                let w = (high[j] - low[j]) / resolution as f64;
                p[j] = low[j] + (k as f64 + 0.5) * w;
            }
            ParameterVector::new(p)
        })
        .collect()
}

impl GridPosterior {
    pub fn new(log_density: &BatchLogDensity, low: &[f64], high: &[f64], resolution: usize) -> Result<Self> {
        let d = low.len();
        if d == 0 || d > 2 || high.len() != d || resolution == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid sampling needs 1 or 2 dimensions, got {d}"
            )));
        }
        if low
            .iter()
            .zip(high)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::InvalidArgument("grid box must be finite and nonempty".into()));
        }
        let centres = cell_centres(low, high, resolution)?;
        Self::from_log_values(low, high, resolution, log_density(&centres)?)
    }

    /// Cell centres in the order [`GridPosterior::new`] evaluates them.
    pub fn centres(low: &[f64], high: &[f64], resolution: usize) -> Result<Vec<ParameterVector>> {
        cell_centres(low, high, resolution)
    }

    /// Builds the grid from log densities already tabulated at
    /// [`GridPosterior::centres`].
    pub fn from_log_values(low: &[f64], high: &[f64], resolution: usize, log_values: Vec<f64>) -> Result<Self> {
        let d = low.len();
        if log_values.len() != resolution.pow(d as u32) {
            return Err(Error::ShapeMismatch {
                expected: resolution.pow(d as u32),
                got: log_values.len(),
            });
        }
        let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::SamplerFailure("density has no mass on the grid".into()));
        }
        let unnorm: Vec<f64> = log_values.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = unnorm.iter().sum();
        let cell_volume: f64 = low.iter().zip(high).map(|(l, h)| (h - l) / resolution as f64).product();
        Ok(Self {
            low: low.to_vec(),
            high: high.to_vec(),
            resolution,
            masses: unnorm.iter().map(|u| u / sum).collect(),
            log_values,
            log_integral: max + (sum * cell_volume).ln(),
        })
    }

    /// Categorical cell draw, then a uniform position inside the cell.
    pub fn sample(&self, m: usize, rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        let d = self.low.len();
        let mut cdf = Vec::with_capacity(self.masses.len());
        let mut acc = 0.0;
        for p in &self.masses {
            acc += p;
            cdf.push(acc);
        }
        let r = self.resolution;
        (0..m)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let mut idx = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                // Never land on a zero-mass cell through rounding.
                while self.masses[idx] == 0.0 && idx > 0 {
                    idx -= 1;
                }
                let mut p = vec![0.0; d];
                for j in (0..d).rev() {
                    let k = idx % r;
                    idx /= r;
                    let w = (self.high[j] - self.low[j]) / r as f64;
                    p[j] = (self.low[j] + (k as f64 + rng.random::<f64>()) * w).min(self.high[j]);
                }
                ParameterVector::new(p)
            })
            .collect()
    }
}

/// Exact-up-to-discretization sampling for one- and two-dimensional targets.
pub fn grid_posterior_sample(
    log_density: &BatchLogDensity,
    low: &[f64],
    high: &[f64],
    resolution: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<ParameterVector>> {
    GridPosterior::new(log_density, low, high, resolution)?.sample(m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pointwise(f: impl Fn(&[f64]) -> f64) -> impl Fn(&[ParameterVector]) -> Result<Vec<f64>> {
        move |ts| Ok(ts.iter().map(|t| f(t)).collect())
    }

    #[test]
    fn masses_sum_to_one() {
        let f = pointwise(|t| -(t[0] * t[0] + 3.0 * t[1] * t[1]));
        let g = GridPosterior::new(&f, &[-3.0, -2.0], &[3.0, 2.0], 50).unwrap();
        assert!((g.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_density_gives_uniform_histogram() {
        let f = pointwise(|_| 0.0);
        let draws = grid_posterior_sample(&f, &[0.0], &[1.0], 10, 100_000, &mut RngStream::new(3)).unwrap();
        let mut counts = [0usize; 10];
        for d in &draws {
            counts[((d[0] * 10.0) as usize).min(9)] += 1;
        }
        let se = (100_000.0 * 0.1 * 0.9f64).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn zero_mass_errors() {
        let f = pointwise(|_| f64::NEG_INFINITY);
        assert!(GridPosterior::new(&f, &[0.0], &[1.0], 10).is_err());
    }

    #[test]
    fn log_integral_of_normal_density() {
        let f = pointwise(|t| -0.5 * t[0] * t[0] - 0.5 * (2.0 * std::f64::consts::PI).ln());
        let g = GridPosterior::new(&f, &[-10.0], &[10.0], 2000).unwrap();
        assert!(g.log_integral.abs() < 1e-6);
    }

    #[test]
    fn samples_stay_in_box() {
        let f = pointwise(|t| t[0] + t[1]);
        let draws = grid_posterior_sample(&f, &[-1.0, 2.0], &[1.0, 3.0], 7, 5000, &mut RngStream::new(1)).unwrap();
        assert!(draws
            .iter()
            .all(|p| (-1.0..=1.0).contains(&p[0]) && (2.0..=3.0).contains(&p[1])));
    }
}
