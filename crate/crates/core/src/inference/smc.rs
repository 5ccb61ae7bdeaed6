use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::abc::{euclidean, prior_proposals, AbcModel, AbcPosterior, PerturbationKernel};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMeta;
use crate::nn::log_sum_exp;
use crate::rng::RngStream;

pub const SMC_MIN_POPULATION: usize = 50;

#[derive(Debug, Clone)]
pub struct SmcResult {
    pub posterior: AbcPosterior,
    /// Tolerance of each completed generation after the initial one.
    pub epsilons: Vec<f64>,
    pub simulations: usize,
}

/// Lower Cholesky factor of a symmetric positive-definite `d x d` matrix.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::InvalidArgument("matrix is not positive definite".into()));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// `ceil(decay * n)`-th smallest distance.
fn decay_quantile(distances: &[f64], decay: f64) -> f64 {
    let mut d = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let k = ((decay * d.len() as f64).ceil() as usize).clamp(1, d.len());
    d[k - 1]
}

struct Population {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    distances: Vec<f64>,
}

/// Gaussian kernel with covariance `2 * Cov_w(survivors)`, kept positive
/// definite by a tiny ridge scaled to the prior box.
struct GaussianKernel {
    chol: Vec<f64>,
    log_norm: f64,
    inv_chol: Vec<f64>,
    d: usize,
}

impl GaussianKernel {
    fn fit(points: &[Vec<f64>], weights: &[f64], width: &[f64]) -> Result<Self> {
        let d = width.len();
        let mean: Vec<f64> = (0..d)
            .map(|j| points.iter().zip(weights).map(|(p, w)| w * p[j]).sum())
            .collect();
        let mut cov = vec![0.0; d * d];
        for (p, w) in points.iter().zip(weights) {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += 2.0 * w * (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        for j in 0..d {
            cov[j * d + j] += (1e-6 * width[j]).powi(2);
        }
        let chol = cholesky(&cov, d)?;
        // Inverse of the lower-triangular factor, for Mahalanobis distances.
        let mut inv = vec![0.0; d * d];
        for c in 0..d {
            for i in 0..d {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = (0..i).map(|k| chol[i * d + k] * inv[k * d + c]).sum();
                inv[i * d + c] = (rhs - s) / chol[i * d + i];
            }
        }
        let log_det: f64 = (0..d).map(|i| chol[i * d + i].ln()).sum();
        Ok(Self {
            log_norm: -log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln(),
            chol,
            inv_chol: inv,
            d,
        })
    }

    fn perturb(&self, centre: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let d = self.d;
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| centre[i] + (0..=i).map(|k| self.chol[i * d + k] * z[k]).sum::<f64>())
            .collect()
    }

    fn log_density(&self, from: &[f64], to: &[f64]) -> f64 {
        let d = self.d;
        let mut q = 0.0;
        for i in 0..d {
            let y: f64 = (0..=i).map(|k| self.inv_chol[i * d + k] * (to[k] - from[k])).sum();
            q += y * y;
        }
        self.log_norm - 0.5 * q
    }
}

enum Kernel {
    Gaussian(GaussianKernel),
    Flip(f64),
}

impl Kernel {
    fn perturb(&self, centre: &[f64], rng: &mut RngStream) -> Vec<f64> {
        match self {
            Kernel::Gaussian(g) => g.perturb(centre, rng),
            Kernel::Flip(p) => centre
                .iter()
                .map(|v| if rng.random::<f64>() < *p { 1.0 - v } else { *v })
                .collect(),
        }
    }

    fn log_density(&self, from: &[f64], to: &[f64]) -> f64 {
        match self {
            Kernel::Gaussian(g) => g.log_density(from, to),
            Kernel::Flip(p) => from
                .iter()
                .zip(to)
                .map(|(a, b)| if a == b { (1.0 - p).ln() } else { p.ln() })
                .sum(),
        }
    }
}

/// Survivors with identical coordinates merged, so the importance weight
/// denominator costs one kernel evaluation per distinct point.
fn merge_duplicates(points: &[Vec<f64>], weights: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out_p: Vec<Vec<f64>> = Vec::new();
    let mut out_w: Vec<f64> = Vec::new();
    for (p, w) in points.iter().zip(weights) {
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(i) => out_w[*i] += w,
            None => {
                index.insert(key, out_p.len());
                out_p.push(p.clone());
                out_w.push(*w);
            }
        }
    }
    (out_p, out_w)
}

/// Sequential Monte Carlo ABC.
///
/// Generation 0 is a plain prior predictive population (drawn exactly as
/// rejection ABC draws its proposals). Each later generation sets its
/// tolerance to the `decay`-quantile of the current distances, resamples the
/// survivors by weight, perturbs them, and keeps proposals within tolerance
/// with weight `p(theta) / sum_j w_j K(theta | theta_j)`. Proposals outside
/// the prior are redrawn without simulating. Sampling stops when the budget
/// is spent; an unfinished generation is discarded, and if it accepted
/// nothing the result carries a warning flag.
pub fn smc_abc<M: AbcModel + ?Sized>(
    model: &M,
    x_o: &[f64],
    budget: usize,
    population: usize,
    decay: f64,
    rng: &RngStream,
) -> Result<SmcResult> {
    if population < SMC_MIN_POPULATION || !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "SMC-ABC needs population >= {SMC_MIN_POPULATION} and decay in (0, 1], got {population}, {decay}"
        )));
    }
    if budget < population {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} below population {population}"
        )));
    }
    let prior = model.kde_prior();
    let (low, high) = prior.bounding_box();
    let width: Vec<f64> = low.iter().zip(&high).map(|(l, h)| h - l).collect();

    let initial = prior_proposals(model, x_o, population, &rng.child_named("proposals"))?;
    let mut pop = Population {
        weights: vec![1.0 / population as f64; population],
        distances: initial.iter().map(|p| p.distance).collect(),
        points: initial.into_iter().map(|p| p.theta).collect(),
    };
    let mut used = population;
    let mut epsilons = Vec::new();
    let mut warning = false;
    let mut last_eps = f64::INFINITY;

    let mut generation = 0u64;
    while used < budget {
        generation += 1;
        let eps = decay_quantile(&pop.distances, decay);
        let survivors: Vec<usize> = (0..population).filter(|i| pop.distances[*i] <= eps).collect();
        let sp: Vec<Vec<f64>> = survivors.iter().map(|i| pop.points[*i].clone()).collect();
        let total: f64 = survivors.iter().map(|i| pop.weights[*i]).sum();
        let sw: Vec<f64> = survivors.iter().map(|i| pop.weights[*i] / total).collect();
        let kernel = match model.kernel() {
            PerturbationKernel::Gaussian => Kernel::Gaussian(GaussianKernel::fit(&sp, &sw, &width)?),
            PerturbationKernel::Flip { prob } => Kernel::Flip(prob),
        };
        let (mp, mw) = merge_duplicates(&sp, &sw);
        let log_mw: Vec<f64> = mw.iter().map(|w| w.ln()).collect();
        let mut cdf = Vec::with_capacity(sw.len());
        let mut acc = 0.0;
        for w in &sw {
            acc += w;
            cdf.push(acc);
        }

        let mut stream = rng.child_named("generation").child(generation);
        let mut next = Population {
            points: Vec::with_capacity(population),
            weights: Vec::with_capacity(population),
            distances: Vec::with_capacity(population),
        };
        let mut terms = vec![0.0; mp.len()];
        while next.points.len() < population && used < budget {
            let u = stream.random::<f64>() * acc;
            let k = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
            let theta = kernel.perturb(&sp[k], &mut stream);
            let lp = model.log_prior(&theta);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            used += 1;
            let x = model.simulate(&theta, &mut stream)?;
            let dist = euclidean(&x, x_o);
            if dist <= eps {
                for (t, (p, lw)) in terms.iter_mut().zip(mp.iter().zip(&log_mw)) {
                    *t = lw + kernel.log_density(p, &theta);
                }
                next.weights.push(lp - log_sum_exp(&terms));
                next.points.push(theta);
                next.distances.push(dist);
            }
        }
        if next.points.len() < population {
            warning = next.points.is_empty();
            break;
        }
        let max = next.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = next.weights.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = w.iter().sum();
        next.weights = w.iter().map(|v| v / s).collect();
        pop = next;
        last_eps = eps;
        epsilons.push(eps);
    }

    let meta = EstimatorMeta::new("smc-abc", model.id(), budget, rng.seed());
    let mut posterior = AbcPosterior::new(meta, prior, pop.points, pop.weights, x_o.to_vec(), last_eps)?;
    posterior.warning = warning;
    Ok(SmcResult {
        posterior,
        epsilons,
        simulations: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::abc::{rejection_abc, AcceptRule, DiscreteToy};
    use crate::simulators::{Benchmark, BenchmarkKind};

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn gaussian_kernel_density_matches_closed_form() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-1.0, 0.2], vec![0.3, -0.8]];
        let k = GaussianKernel::fit(&pts, &[0.25; 4], &[0.0, 0.0]).unwrap();
        // Check against an explicitly inverted 2x2 covariance.
        let c = |i: usize, j: usize| (0..2).map(|k2| k.chol[i * 2 + k2] * k.chol[j * 2 + k2]).sum::<f64>();
        let (a, b, d) = (c(0, 0), c(0, 1), c(1, 1));
        let det = a * d - b * b;
        let (dx, dy) = (0.4, -0.3);
        let q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        let want = -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln();
        assert!((k.log_density(&[0.0, 0.0], &[dx, dy]) - want).abs() < 1e-12);
    }

    #[test]
    fn single_generation_equals_full_rejection() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let x = [0.2, -0.1, 0.4, 0.0];
        let rng = RngStream::new(8);
        let smc = smc_abc(&bm, &x, 500, 500, 0.5, &rng).unwrap();
        let rej = rejection_abc(&bm, &x, 500, AcceptRule::Quantile(1.0), &rng).unwrap();
        assert_eq!(smc.posterior.points(), rej.points());
        assert!(smc.epsilons.is_empty());
    }

    #[test]
    fn tolerances_never_increase_and_budget_is_respected() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian).with_fresh_counter();
        let x = [0.5, 0.1, 0.9, 0.3];
        let res = smc_abc(&bm, &x, 5000, 200, 0.5, &RngStream::new(2)).unwrap();
        assert!(res.epsilons.len() >= 2);
        assert!(res.epsilons.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(res.simulations, 5000);
        assert_eq!(bm.calls(), 5000);
        let s: f64 = res.posterior.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_toy_weighted_frequencies() {
        let toy = DiscreteToy::default();
        let res = smc_abc(&toy, &[0.0], 200_000, 10_000, 0.5, &RngStream::new(6)).unwrap();
        assert!(res.epsilons.last() == Some(&0.0));
        let post = &res.posterior;
        let p0: f64 = post
            .points()
            .iter()
            .zip(post.weights())
            .filter(|(p, _)| p[0] == 0.0)
            .map(|(_, w)| w)
            .sum();
        let n_eff = 1.0 / post.weights().iter().map(|w| w * w).sum::<f64>();
        let se = (0.9 * 0.1 / n_eff).sqrt();
        assert!((p0 - 0.9).abs() < 3.0 * se, "{p0} (n_eff {n_eff})");
    }
}
