use super::grid::GridPosterior;
use super::mcmc::{metropolis_hastings, MhConfig};
use crate::error::{Error, Result};
use crate::estimator::PosteriorEstimator;
use crate::rng::RngStream;
use crate::types::ParameterVector;

/// How estimators without a closed-form sampler draw from `p̂(. | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub grid_resolution_1d: usize,
    pub grid_resolution_2d: usize,
    pub mh_burn_in: usize,
    pub mh_thin: usize,
    /// Prior draws screened for the highest-density chain start.
    pub mh_init_candidates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            grid_resolution_1d: 512,
            grid_resolution_2d: 64,
            mh_burn_in: 500,
            mh_thin: 5,
            mh_init_candidates: 64,
        }
    }
}

/// Grid sampling over the prior bounding box for `d <= 2`, random-walk MH
/// started from the best of a few prior draws otherwise.
pub fn sample_unnormalized<E: PosteriorEstimator + ?Sized>(
    est: &E,
    cfg: &SamplerConfig,
    m: usize,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<ParameterVector>> {
    let prior = est.prior();
    let (low, high) = prior.bounding_box();
    let density = |ts: &[ParameterVector]| est.log_density_batch(ts, x);
    match prior.dim() {
        1 => GridPosterior::new(&density, &low, &high, cfg.grid_resolution_1d)?.sample(m, rng),
        2 => GridPosterior::new(&density, &low, &high, cfg.grid_resolution_2d)?.sample(m, rng),
        _ => sample_mh(est, cfg, m, x, rng),
    }
}

/// Random-walk MH on `p̂(. | x)` started from the best of a few prior draws,
/// with initial step 0.1 of the prior box width per dimension.
pub fn sample_mh<E: PosteriorEstimator + ?Sized>(
    est: &E,
    cfg: &SamplerConfig,
    m: usize,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<ParameterVector>> {
    let prior = est.prior();
    let (low, high) = prior.bounding_box();
    let candidates = (0..cfg.mh_init_candidates.max(1))
        .map(|_| ParameterVector::new(prior.sample(rng)))
        .collect::<Result<Vec<_>>>()?;
    let lps = est.log_density_batch(&candidates, x)?;
    let (best, _) = lps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::SamplerFailure("no chain start".into()))?;
    let mh = MhConfig {
        samples: m,
        burn_in: cfg.mh_burn_in,
        thin: cfg.mh_thin,
        scale: low.iter().zip(&high).map(|(l, h)| 0.1 * (h - l)).collect(),
        adapt: true,
    };
    let target = |t: &[f64]| est.log_density(t, x);
    Ok(metropolis_hastings(&target, &candidates[best], &mh, rng)?.samples)
}
