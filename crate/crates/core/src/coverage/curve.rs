use rand::Rng;
use rayon::prelude::*;

use super::hpd::{sample_log_densities, ConfidenceLevel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::PosteriorEstimator;
use crate::rng::RngStream;

/// Posterior samples per test observation.
pub const DEFAULT_SAMPLES: usize = 2000;

/// Smallest test set an expected coverage estimate is computed from.
pub const MIN_TEST_PAIRS: usize = 100;

/// How `theta*` is ranked against self samples with exactly its log density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Ties count as inside, as in [`super::hpd_contains`].
    Inclusive,
    /// `theta*` takes a uniformly random rank among its ties. Identical to
    /// `Inclusive` for continuous densities; for flat densities it yields the
    /// nominal coverage instead of 1.
    Randomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageOptions {
    pub samples: usize,
    pub tie_break: TieBreak,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            tie_break: TieBreak::Randomized,
        }
    }
}

/// Empirical expected coverage at each level with binomial uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    pub levels: Vec<f64>,
    pub empirical: Vec<f64>,
    pub hits: Vec<usize>,
    pub n_eval: usize,
    pub ci_halfwidths: Vec<f64>,
}

/// Normal-approximation 95% half-width, floored at `1.96 / (2 sqrt(n))` when
/// `p` is 0 or 1.
pub fn coverage_ci(p: f64, n: usize) -> f64 {
    let n = n.max(1) as f64;
    if p <= 0.0 || p >= 1.0 {
        1.96 / (2.0 * n.sqrt())
    } else {
        1.96 * (p * (1.0 - p) / n).sqrt()
    }
}

impl CoverageCurve {
    /// Pools one indicator row per test pair (one bit per level).
    pub fn from_indicators(levels: &[f64], rows: &[Vec<bool>]) -> Result<Self> {
        if rows.is_empty() || levels.is_empty() {
            return Err(Error::EmptyDataset("no coverage indicators".into()));
        }
        if rows.iter().any(|r| r.len() != levels.len()) {
            return Err(Error::ShapeMismatch {
                expected: levels.len(),
                got: rows.iter().map(|r| r.len()).find(|l| *l != levels.len()).unwrap_or(0),
            });
        }
        let n = rows.len();
        let hits: Vec<usize> = (0..levels.len())
            .map(|j| rows.iter().filter(|r| r[j]).count())
            .collect();
        let empirical: Vec<f64> = hits.iter().map(|h| *h as f64 / n as f64).collect();
        Ok(Self {
            levels: levels.to_vec(),
            ci_halfwidths: empirical.iter().map(|p| coverage_ci(*p, n)).collect(),
            empirical,
            hits,
            n_eval: n,
        })
    }

    pub fn at(&self, level: f64) -> Result<f64> {
        self.levels
            .iter()
            .position(|l| (l - level).abs() < 1e-9)
            .map(|i| self.empirical[i])
            .ok_or(Error::MissingLevel(level))
    }

    pub fn ci_at(&self, level: f64) -> Result<f64> {
        self.levels
            .iter()
            .position(|l| (l - level).abs() < 1e-9)
            .map(|i| self.ci_halfwidths[i])
            .ok_or(Error::MissingLevel(level))
    }
}

/// Empirical coverage at `level` is at least `level`.
pub fn has_coverage(curve: &CoverageCurve, level: f64) -> Result<bool> {
    Ok(curve.at(level)? >= level)
}

/// Coverage at every evaluated level.
pub fn is_conservative(curve: &CoverageCurve) -> bool {
    !curve.levels.is_empty() && curve.levels.iter().zip(&curve.empirical).all(|(l, e)| e >= l)
}

/// Membership of `theta*` in the HPD region of `p̂(. | x)` at every level,
/// sharing one set of `m` self samples. Regions are nested, so the row is
/// monotone in the level.
pub fn coverage_indicators<E: PosteriorEstimator + ?Sized>(
    est: &E,
    x: &[f64],
    theta_star: &[f64],
    levels: &[f64],
    opts: &CoverageOptions,
    rng: &mut RngStream,
) -> Result<Vec<bool>> {
    let lps = sample_log_densities(est, x, opts.samples, rng)?;
    let lp_star = est.log_density(theta_star, x)?;
    indicators_from_log_densities(&lps, lp_star, levels, opts.tie_break, rng)
}

/// HPD membership of a parameter with log density `lp_star`, given the
/// ascending log densities of self samples, at every level.
pub fn indicators_from_log_densities(
    sorted_lps: &[f64],
    lp_star: f64,
    levels: &[f64],
    tie_break: TieBreak,
    rng: &mut RngStream,
) -> Result<Vec<bool>> {
    let levels = levels
        .iter()
        .map(|l| ConfidenceLevel::new(*l))
        .collect::<Result<Vec<_>>>()?;
    let m = sorted_lps.len();
    if m == 0 {
        return Err(Error::EmptyDataset("no self samples".into()));
    }
    if lp_star.is_nan() {
        return Err(Error::SamplerFailure("NaN log density at the true parameter".into()));
    }
    let lps = sorted_lps;
    // Samples strictly above theta*, and ties.
    let above = m - lps.partition_point(|l| *l <= lp_star);
    let ties = lps.partition_point(|l| *l <= lp_star) - lps.partition_point(|l| *l < lp_star);
    let tie_rank = match tie_break {
        TieBreak::Inclusive => 0,
        TieBreak::Randomized if ties > 0 => rng.random_range(0..=ties),
        TieBreak::Randomized => 0,
    };
    let rank = above + tie_rank;
    Ok(levels
        .iter()
        .map(|l| lp_star > f64::NEG_INFINITY && rank < m - l.quantile_index(m))
        .collect())
}

/// Expected coverage over the `(theta*, x)` pairs of `test`; pair `i` uses
/// child stream `i`, so the result does not depend on scheduling.
pub fn empirical_expected_coverage<E: PosteriorEstimator + ?Sized>(
    est: &E,
    test: &Dataset,
    levels: &[f64],
    opts: &CoverageOptions,
    rng: &RngStream,
) -> Result<CoverageCurve> {
    if test.len() < MIN_TEST_PAIRS {
        return Err(Error::InvalidArgument(format!(
            "coverage needs at least {MIN_TEST_PAIRS} test pairs, got {}",
            test.len()
        )));
    }
    let rows = test
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| coverage_indicators(est, &s.x, &s.theta, levels, opts, &mut rng.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    CoverageCurve::from_indicators(levels, &rows)
}

/// Mean of `log p̂(theta* | x) - log p(theta*)` over the test pairs.
pub fn expected_information_gain<E: PosteriorEstimator + ?Sized>(est: &E, test: &Dataset) -> Result<f64> {
    if !est.is_normalized() {
        return Err(Error::Unnormalized(format!(
            "{} has no normalized density; tabulate it on a grid and normalize first",
            est.meta().method
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("no test pairs".into()));
    }
    let gains = test
        .samples
        .par_iter()
        .map(|s| Ok(est.log_density(&s.theta, &s.x)? - est.prior().log_density(&s.theta)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(gains.iter().sum::<f64>() / gains.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::default_levels;
    use crate::dataset::sample_joint;
    use crate::estimator::PriorEstimator;
    use crate::simulators::{gaussian_true_posterior, Benchmark, BenchmarkKind};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ci_formula() {
        assert!((coverage_ci(0.5, 100) - 0.098).abs() < 1e-12);
        assert!((coverage_ci(0.5, 10_000) - 0.0098).abs() < 1e-12);
        assert!((coverage_ci(1.0, 100) - 0.098).abs() < 1e-12);
        assert!((coverage_ci(0.0, 100) - 0.098).abs() < 1e-12);
    }

    #[test]
    fn pooled_fraction() {
        let rows = vec![vec![true], vec![true], vec![false], vec![true]];
        let c = CoverageCurve::from_indicators(&[0.5], &rows).unwrap();
        assert_eq!(c.empirical, vec![0.75]);
        assert_eq!(c.n_eval, 4);
    }

    #[test]
    fn coverage_predicates() {
        let curve = |e: Vec<f64>| CoverageCurve {
            levels: vec![0.5, 0.95],
            ci_halfwidths: vec![0.0; 2],
            hits: vec![0; 2],
            n_eval: 1,
            empirical: e,
        };
        assert!(has_coverage(&curve(vec![0.5, 0.97]), 0.95).unwrap());
        assert!(!has_coverage(&curve(vec![0.5, 0.90]), 0.95).unwrap());
        assert!(has_coverage(&curve(vec![0.5, 0.95]), 0.95).unwrap());
        assert!(has_coverage(&curve(vec![0.5, 0.95]), 0.7).is_err());
        assert!(is_conservative(&curve(vec![0.5, 0.95])));
        assert!(!is_conservative(&curve(vec![0.49, 0.99])));
    }

    #[test]
    fn always_covering_estimator() {
        // Ties everywhere with the inclusive rule: every region is the support.
        let bm = Benchmark::new(BenchmarkKind::Slcp);
        let est = PriorEstimator::new("slcp", bm.prior().clone());
        let test = sample_joint(&bm, 100, &RngStream::new(1)).unwrap();
        let opts = CoverageOptions {
            samples: 200,
            tie_break: TieBreak::Inclusive,
        };
        let c = empirical_expected_coverage(&est, &test, &default_levels(), &opts, &RngStream::new(2)).unwrap();
        assert!(c.empirical.iter().all(|e| *e == 1.0));
    }

    #[test]
    fn true_posterior_half_level_containment() {
        let post = gaussian_true_posterior();
        let x = [0.3, -0.2, 1.1, 0.4];
        let mut rng = RngStream::new(5);
        let mut hits = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let theta = post.sample(1, &x, &mut rng).unwrap();
            let opts = CoverageOptions {
                samples: 200,
                tie_break: TieBreak::Inclusive,
            };
            hits += coverage_indicators(&post, &x, &theta[0], &[0.5], &opts, &mut rng).unwrap()[0] as usize;
        }
        let f = hits as f64 / trials as f64;
        assert!((f - 0.5).abs() < 0.015, "{f}");
    }

    #[test]
    fn curve_is_monotone_and_deterministic() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let post = gaussian_true_posterior().with_std_scale(0.7);
        let test = sample_joint(&bm, 300, &RngStream::new(3)).unwrap();
        let opts = CoverageOptions {
            samples: 300,
            ..CoverageOptions::default()
        };
        let a = empirical_expected_coverage(&post, &test, &default_levels(), &opts, &RngStream::new(4)).unwrap();
        let b = empirical_expected_coverage(&post, &test, &default_levels(), &opts, &RngStream::new(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.empirical.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn information_gain_of_prior_and_truth() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let test = sample_joint(&bm, 10_000, &RngStream::new(6)).unwrap();
        let prior = PriorEstimator::new("gaussian", bm.prior().clone());
        assert_eq!(expected_information_gain(&prior, &test).unwrap(), 0.0);
        // I(theta; x) = 0.5 ln(1 + d) for d unit-variance observations.
        let eig = expected_information_gain(&gaussian_true_posterior(), &test).unwrap();
        assert!((eig - 0.5 * 5f64.ln()).abs() < 0.05, "{eig}");
        assert!(eig >= 0.0);
    }

    proptest! {
        #[test]
        fn indicator_rows_are_nested(seed in 0u64..1000, scale in 0.3f64..3.0) {
            let post = gaussian_true_posterior().with_std_scale(scale);
            let mut rng = RngStream::new(seed);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let theta = [rng.random_range(-2.0..2.0)];
            let row = coverage_indicators(&post, &x, &theta, &default_levels(), &CoverageOptions { samples: 100, ..CoverageOptions::default() }, &mut rng).unwrap();
            prop_assert!(row.windows(2).all(|w| !w[0] || w[1]));
        }
    }
}
