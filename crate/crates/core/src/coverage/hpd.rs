use crate::error::{Error, Result};
use crate::estimator::PosteriorEstimator;
use crate::inference::GridPosterior;
use crate::rng::RngStream;
use crate::types::ParameterVector;

/// A credibility `1 - alpha` strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(one_minus_alpha: f64) -> Result<Self> {
        if one_minus_alpha > 0.0 && one_minus_alpha < 1.0 {
            Ok(Self(one_minus_alpha))
        } else {
            Err(Error::InvalidArgument(format!(
                "confidence level {one_minus_alpha} outside (0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn alpha(self) -> f64 {
        1.0 - self.0
    }

    /// Index of the cutoff in `m` ascending log densities, `floor(alpha * m)`.
    pub(crate) fn quantile_index(self, m: usize) -> usize {
        ((self.alpha() * m as f64 + 1e-9).floor() as usize).min(m - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpdThreshold {
    pub cutoff: f64,
    pub level: ConfidenceLevel,
    pub m: usize,
}

impl HpdThreshold {
    /// Inclusive membership: ties with the cutoff are inside.
    pub fn contains(&self, log_density: f64) -> bool {
        log_density >= self.cutoff
    }
}

pub(crate) fn sample_log_densities<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if m < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 posterior samples needed, got {m}"
        )));
    }
    est.check_observation(x)?;
    let draws = est.sample(m, x, rng)?;
    let mut lps = est.log_density_batch(&draws, x)?;
    if lps.iter().any(|l| l.is_nan()) {
        return Err(Error::SamplerFailure("NaN log density at a posterior sample".into()));
    }
    lps.sort_by(f64::total_cmp);
    Ok(lps)
}

/// Cutoff of the `level` HPD region from `m` self samples.
pub fn hpd_threshold<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    level: ConfidenceLevel,
    m: usize,
    rng: &mut RngStream,
) -> Result<HpdThreshold> {
    let lps = sample_log_densities(est, x, m, rng)?;
    let cutoff = lps[level.quantile_index(m)];
    if !cutoff.is_finite() {
        return Err(Error::SamplerFailure(format!("non-finite HPD cutoff {cutoff}")));
    }
    Ok(HpdThreshold { cutoff, level, m })
}

pub fn hpd_contains<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    theta_star: &[f64],
    level: ConfidenceLevel,
    m: usize,
    rng: &mut RngStream,
) -> Result<bool> {
    let t = hpd_threshold(est, x, level, m, rng)?;
    Ok(t.contains(est.log_density(theta_star, x)?))
}

/// HPD membership from a tabulated density: cells are added in decreasing
/// density until their mass reaches `level`; `theta*` is inside when its
/// density is at least that of the last cell added.
pub fn grid_hpd_contains<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    theta_star: &[f64],
    level: ConfidenceLevel,
    resolution: usize,
) -> Result<bool> {
    Ok(grid_hpd_indicators(est, x, theta_star, &[level.value()], resolution)?[0])
}

/// [`grid_hpd_contains`] at several levels from one tabulation.
pub fn grid_hpd_indicators<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    theta_star: &[f64],
    levels: &[f64],
    resolution: usize,
) -> Result<Vec<bool>> {
    let levels = levels
        .iter()
        .map(|l| ConfidenceLevel::new(*l))
        .collect::<Result<Vec<_>>>()?;
    let (low, high) = est.prior().bounding_box();
    let density = |ts: &[ParameterVector]| est.log_density_batch(ts, x);
    let grid = GridPosterior::new(&density, &low, &high, resolution)?;
    let mut order: Vec<usize> = (0..grid.masses.len()).collect();
    order.sort_by(|a, b| grid.log_values[*b].total_cmp(&grid.log_values[*a]));
    let mut cumulative = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for i in &order {
        acc += grid.masses[*i];
        cumulative.push(acc);
    }
    let lp_star = est.log_density(theta_star, x)?;
    Ok(levels
        .iter()
        .map(|l| {
            let k = cumulative.partition_point(|c| *c < l.value()).min(order.len() - 1);
            lp_star >= grid.log_values[order[k]]
        })
        .collect())
}
