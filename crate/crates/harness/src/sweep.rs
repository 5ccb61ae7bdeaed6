//! Coverage of many sub-ensembles drawn from one set of trained members.
//!
//! For unnormalized members in one or two dimensions every member is
//! tabulated on the sampling grid once per test observation; each subset's
//! grid is then the log-mean-exp of its members' tables. Results are
//! identical to scoring each subset as an [`EnsembleEstimator`] with stream
//! `rng.child(k)` for subset `k`.

use rayon::prelude::*;

use sbicov_core::coverage::{coverage_indicators, indicators_from_log_densities, CoverageOptions};
use sbicov_core::inference::{EnsembleEstimator, GridPosterior};
use sbicov_core::nn::log_sum_exp;
use sbicov_core::{Dataset, Error, ParameterVector, PosteriorEstimator};

use crate::error::Result;

/// Coverage indicator rows (one per test pair) for every subset of member
/// indices.
pub fn subset_coverage(
    ensemble: &EnsembleEstimator,
    subsets: &[Vec<usize>],
    test: &Dataset,
    levels: &[f64],
    opts: &CoverageOptions,
    rng: &sbicov_core::RngStream,
) -> Result<Vec<Vec<Vec<bool>>>> {
    let members = ensemble.members();
    if subsets.iter().flatten().any(|j| *j >= members.len()) || subsets.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("subset refers to a missing member".into()).into());
    }
    let dim = ensemble.prior().dim();
    let shared_grid = dim <= 2 && members.iter().all(|m| !m.is_normalized());
    if !shared_grid {
        return subsets
            .iter()
            .enumerate()
            .map(|(k, subset)| {
                let mut e =
                    EnsembleEstimator::new(subset.iter().map(|j| members[*j].clone()).collect(), ensemble.kind())?;
                e.sampler = ensemble.sampler.clone();
                let r = rng.child(k as u64);
                Ok(test
                    .samples
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| coverage_indicators(&e, &s.x, &s.theta, levels, opts, &mut r.child(i as u64)))
                    .collect::<std::result::Result<Vec<_>, _>>()?)
            })
            .collect();
    }
    if opts.samples < 100 {
        return Err(
            Error::InvalidArgument(format!("at least 100 posterior samples needed, got {}", opts.samples)).into(),
        );
    }
    let (low, high) = ensemble.prior().bounding_box();
    let resolution = if dim == 1 {
        ensemble.sampler.grid_resolution_1d
    } else {
        ensemble.sampler.grid_resolution_2d
    };
    let centres = GridPosterior::centres(&low, &high, resolution)?;
    let streams: Vec<_> = (0..subsets.len()).map(|k| rng.child(k as u64)).collect();

    let per_pair = test
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<Vec<Vec<bool>>> {
            let x = s.x.values();
            let tables = members
                .iter()
                .map(|m| m.log_density_batch(&centres, x))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let star = ParameterVector::new(s.theta.values().to_vec())?;
            let at_star = members
                .iter()
                .map(|m| Ok(m.log_density_batch(std::slice::from_ref(&star), x)?[0]))
                .collect::<Result<Vec<f64>>>()?;
            subsets
                .iter()
                .zip(&streams)
                .map(|(subset, stream)| {
                    let mut r = stream.child(i as u64);
                    let ln_n = (subset.len() as f64).ln();
                    let mut column = vec![0.0; subset.len()];
                    // `value(q)` is the log density of the q-th member of the subset.
                    let mut mix = |value: &dyn Fn(usize) -> f64| {
                        for (q, c) in column.iter_mut().enumerate() {
                            *c = value(q);
                        }
                        log_sum_exp(&column) - ln_n
                    };
                    let values: Vec<f64> = (0..centres.len()).map(|c| mix(&|q| tables[subset[q]][c])).collect();
                    let draws = GridPosterior::from_log_values(&low, &high, resolution, values)?
                        .sample(opts.samples, &mut r)?;
                    let at_draws = subset
                        .iter()
                        .map(|j| members[*j].log_density_batch(&draws, x))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    let mut lps: Vec<f64> = (0..draws.len()).map(|d| mix(&|q| at_draws[q][d])).collect();
                    if lps.iter().any(|l| l.is_nan()) {
                        return Err(Error::SamplerFailure("NaN log density at a posterior sample".into()).into());
                    }
                    lps.sort_by(f64::total_cmp);
                    let lp_star = mix(&|q| at_star[subset[q]]);
                    Ok(indicators_from_log_densities(
                        &lps,
                        lp_star,
                        levels,
                        opts.tie_break,
                        &mut r,
                    )?)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((0..subsets.len())
        .map(|k| per_pair.iter().map(|rows| rows[k].clone()).collect())
        .collect())
}
