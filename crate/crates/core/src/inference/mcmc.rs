use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::ParameterVector;

/// Proposals without a single acceptance before the chain is declared stuck.
pub const MH_STALL_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    /// Kept draws after burn-in and thinning.
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial per-dimension proposal standard deviations.
    pub scale: Vec<f64>,
    /// Adapt `scale` during burn-in toward 0.2-0.5 acceptance.
    pub adapt: bool,
}

impl MhConfig {
    pub fn new(samples: usize, scale: Vec<f64>) -> Self {
        Self {
            samples,
            burn_in: 500,
            thin: 5,
            scale,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MhChain {
    pub samples: Vec<ParameterVector>,
    /// Log density of each kept draw.
    pub log_densities: Vec<f64>,
    /// Acceptance rate over the kept (post burn-in) phase.
    pub acceptance_rate: f64,
    /// Proposal scale after adaptation.
    pub scale: Vec<f64>,
}

/// Gaussian random-walk Metropolis-Hastings.
///
/// During burn-in the proposal scale is multiplied by 0.7 or 1.3 every 50
/// steps whenever the recent acceptance rate is below 0.2 or above 0.5; it is
/// frozen afterwards so the kept chain is a valid Markov chain.
pub fn metropolis_hastings(
    log_density: &dyn Fn(&[f64]) -> Result<f64>,
    init: &[f64],
    cfg: &MhConfig,
    rng: &mut RngStream,
) -> Result<MhChain> {
    if cfg.scale.len() != init.len() || cfg.thin == 0 || cfg.scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("bad Metropolis-Hastings configuration".into()));
    }
    let mut current = init.to_vec();
    let mut lp = log_density(&current)?;
    if !lp.is_finite() {
        return Err(Error::SamplerFailure(format!(
            "non-finite log density {lp} at initial point {init:?}"
        )));
    }
    let mut scale = cfg.scale.clone();
    let mut proposal = vec![0.0; init.len()];
    let mut since_accept = 0;
    let mut window_accepts = 0;
    let mut kept_accepts = 0usize;
    let total = cfg.burn_in + cfg.samples * cfg.thin;
    let mut samples = Vec::with_capacity(cfg.samples);
    let mut log_densities = Vec::with_capacity(cfg.samples);

    for step in 0..total {
        for ((p, c), s) in proposal.iter_mut().zip(&current).zip(&scale) {
            let z: f64 = StandardNormal.sample(rng);
            *p = c + s * z;
        }
        let lp_new = log_density(&proposal)?;
        let log_u: f64 = rng.random::<f64>().ln();
        // `lp_new - lp >= 0` always accepts, including exact ties.
        if lp_new.is_finite() && (lp_new >= lp || log_u < lp_new - lp) {
            current.copy_from_slice(&proposal);
            lp = lp_new;
            since_accept = 0;
            window_accepts += 1;
            if step >= cfg.burn_in {
                kept_accepts += 1;
            }
        } else {
            since_accept += 1;
            if since_accept >= MH_STALL_LIMIT {
                return Err(Error::SamplerFailure(format!(
                    "no acceptance in {MH_STALL_LIMIT} proposals near {current:?} (scale {scale:?})"
                )));
            }
        }
        if step < cfg.burn_in && cfg.adapt && (step + 1) % 50 == 0 {
            let rate = window_accepts as f64 / 50.0;
            let factor = if rate < 0.2 {
                0.7
            } else if rate > 0.5 {
                1.3
            } else {
                1.0
            };
            scale.iter_mut().for_each(|s| *s *= factor);
            window_accepts = 0;
        }
        if step >= cfg.burn_in && (step - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            samples.push(ParameterVector::new(current.clone())?);
            log_densities.push(lp);
        }
    }
    let kept_steps = (total - cfg.burn_in).max(1);
    Ok(MhChain {
        samples,
        log_densities,
        acceptance_rate: kept_accepts as f64 / kept_steps as f64,
        scale,
    })
}
