use rayon::prelude::*;

use super::nre::{fit_blocks, simulate_training_set, RatioEstimator, NRE_MIN_DATASET};
use super::sampler::{sample_mh, SamplerConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rng::RngStream;
use crate::simulators::Benchmark;
use crate::types::JointSample;

#[derive(Debug, Clone)]
pub struct SnreOutcome {
    pub estimator: RatioEstimator,
    /// All simulations, round blocks in order.
    pub dataset: Dataset,
    pub round_sizes: Vec<usize>,
}

/// `budget / rounds` per round, the remainder spread over the earliest rounds.
pub fn round_sizes(budget: usize, rounds: usize) -> Vec<usize> {
    (0..rounds)
        .map(|r| budget / rounds + usize::from(r < budget % rounds))
        .collect()
}

/// Sequential ratio estimation for the single observation `x_o`.
///
/// Round 1 simulates from the prior exactly like an amortized cell; each
/// later round draws parameters from the current posterior at `x_o` by
/// random-walk MH, simulates them, and continues training (warm start, first
/// round normalizers) on all pairs so far. Marginal pairs are shuffled within
/// rounds and the last tenth of every round is held out for validation.
pub fn snre_sequential(
    benchmark: &Benchmark,
    x_o: &[f64],
    budget: usize,
    rounds: usize,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<SnreOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("at least one round is required".into()));
    }
    let sizes = round_sizes(budget, rounds);
    if sizes.iter().any(|s| *s < NRE_MIN_DATASET.min(budget)) || budget < NRE_MIN_DATASET {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} over {rounds} rounds leaves rounds below {NRE_MIN_DATASET} simulations"
        )));
    }
    let mut dataset = simulate_training_set(benchmark, sizes[0], rng)?;
    let mut blocks = vec![0..sizes[0]];
    let (mut est, _) = fit_blocks(benchmark, &dataset, &blocks, cfg, rng, None)?;
    est = est.with_observation(x_o.to_vec());
    let sampler = SamplerConfig::default();

    for (r, &n) in sizes.iter().enumerate().skip(1) {
        let round_rng = rng.child_named("round").child(r as u64);
        let thetas = sample_mh(&est, &sampler, n, x_o, &mut round_rng.child_named("mcmc"))
            .map_err(|e| Error::SamplerFailure(format!("round {}: {e}", r + 1)))?;
        let sim_rng = round_rng.child_named("simulations");
        let new: Vec<JointSample> = thetas
            .into_par_iter()
            .enumerate()
            .map(|(i, theta)| {
                let x = benchmark.simulate_with_retry(&theta, &mut sim_rng.child(i as u64))?;
                Ok(JointSample { theta, x })
            })
            .collect::<Result<_>>()?;
        let start = dataset.len();
        dataset.samples.extend(new);
        blocks.push(start..dataset.len());
        let (next, _) = fit_blocks(benchmark, &dataset, &blocks, cfg, &round_rng, Some(&est))?;
        est = next.with_observation(x_o.to_vec());
    }
    est.meta.method = "snre".into();
    est.meta.budget = budget;
    est.meta.seed = rng.seed();
    Ok(SnreOutcome {
        estimator: est,
        dataset,
        round_sizes: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::PosteriorEstimator;
    use crate::inference::nre::train_nre;
    use crate::simulators::BenchmarkKind;

    fn small() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            hidden: vec![16, 16],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_sizes_sum_to_budget() {
        assert_eq!(round_sizes(1030, 10), vec![103; 10]);
        assert_eq!(round_sizes(1025, 10), [vec![103; 5], vec![102; 5]].concat());
        assert_eq!(round_sizes(1025, 10).iter().sum::<usize>(), 1025);
    }

    #[test]
    fn one_round_matches_amortized_estimator() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let rng = RngStream::new(4);
        let x_o = [0.1, 0.2, 0.3, 0.4];
        let seq = snre_sequential(&bm, &x_o, 256, 1, &small(), &rng).unwrap();
        let ds = simulate_training_set(&bm, 256, &rng).unwrap();
        assert_eq!(seq.dataset.samples, ds.samples);
        let (amortized, _) = train_nre(&bm, &ds, &small(), &rng).unwrap();
        assert_eq!(seq.estimator.net(), amortized.net());
    }

    #[test]
    fn counts_every_simulation() {
        let bm = Benchmark::new(BenchmarkKind::Slcp).with_fresh_counter();
        let x_o = vec![0.5; 8];
        let out = snre_sequential(&bm, &x_o, 1000, 4, &small(), &RngStream::new(1)).unwrap();
        assert_eq!(bm.calls(), 1000);
        assert_eq!(out.dataset.len(), 1000);
        assert_eq!(out.round_sizes, vec![250; 4]);
        assert_eq!(out.estimator.observation(), Some(&x_o[..]));
        assert_eq!(out.estimator.meta().method, "snre");
    }
}
