use rand::Rng;
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator};
use crate::nn::{mdn_log_density, MdnParams};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::simulators::Benchmark;
use crate::types::ParameterVector;

/// Smallest simulation budget accepted by the ABC samplers.
pub const ABC_MIN_BUDGET: usize = 100;

/// How SMC-ABC moves surviving particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationKernel {
    /// Gaussian with twice the weighted population covariance.
    Gaussian,
    /// For binary parameters: each coordinate flips `0 <-> 1` with `prob`.
    Flip { prob: f64 },
}

/// What an ABC sampler needs from a model: prior draws and densities,
/// forward simulation and a perturbation kernel.
pub trait AbcModel: Sync {
    fn id(&self) -> &str;

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64>;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>>;

    /// Continuous prior whose support bounds the kernel density estimate.
    fn kde_prior(&self) -> Prior;

    fn kernel(&self) -> PerturbationKernel {
        PerturbationKernel::Gaussian
    }
}

impl AbcModel for Benchmark {
    fn id(&self) -> &str {
        Benchmark::id(self)
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        self.prior().sample(rng)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior().log_density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok(self.simulate_with_retry(theta, rng)?.into_inner())
    }

    fn kde_prior(&self) -> Prior {
        self.prior().clone()
    }
}

/// `theta ~ U{0, 1}`, `x = theta` flipped with probability 0.1. The exact
/// posterior is enumerable, which makes it an ABC correctness oracle.
#[derive(Debug, Clone)]
pub struct DiscreteToy {
    pub flip: f64,
}

impl Default for DiscreteToy {
    fn default() -> Self {
        Self { flip: 0.1 }
    }
}

impl DiscreteToy {
    /// `p(theta | x)` for `theta = 0, 1`.
    pub fn posterior(&self, x: f64) -> [f64; 2] {
        let like = |t: f64| if t == x { 1.0 - self.flip } else { self.flip };
        let (a, b) = (like(0.0), like(1.0));
        [a / (a + b), b / (a + b)]
    }
}

impl AbcModel for DiscreteToy {
    fn id(&self) -> &str {
        "discrete-toy"
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![if rng.random::<bool>() { 1.0 } else { 0.0 }]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta[0] == 0.0 || theta[0] == 1.0 {
            0.5f64.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn simulate(&self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let flipped = rng.random::<f64>() < self.flip;
        Ok(vec![if flipped { 1.0 - theta[0] } else { theta[0] }])
    }

    fn kde_prior(&self) -> Prior {
        Prior::uniform(vec![-0.5], vec![1.5]).expect("valid")
    }

    fn kernel(&self) -> PerturbationKernel {
        PerturbationKernel::Flip { prob: 0.3 }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Acceptance rule of rejection ABC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcceptRule {
    /// Keep the `ceil(budget * q)` simulations closest to the observation.
    Quantile(f64),
    /// Keep every simulation within distance `eps` (`0` means exact match).
    Threshold(f64),
}

/// Per-dimension Silverman bandwidth on weighted points,
/// `h_j = sigma_j (4 / ((d + 2) n_eff))^(1 / (d + 4))` with
/// `n_eff = 1 / sum(w^2)`. Zero spread falls back to `1e-3` of `fallback_width`.
pub fn silverman_bandwidth(points: &[Vec<f64>], weights: &[f64], fallback_width: &[f64]) -> Vec<f64> {
    let d = fallback_width.len();
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let n_eff = 1.0 / w.iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((d as f64 + 2.0) * n_eff)).powf(1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|j| {
            let mean: f64 = points.iter().zip(&w).map(|(p, w)| w * p[j]).sum();
            let var: f64 = points.iter().zip(&w).map(|(p, w)| w * (p[j] - mean).powi(2)).sum();
            let h = var.sqrt() * factor;
            if h > 0.0 {
                h
            } else {
                1e-3 * fallback_width[j]
            }
        })
        .collect()
}

/// Weighted accepted parameters with a Gaussian kernel density estimate,
/// restricted to the prior support. Tied to the observation it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcPosterior {
    pub(crate) meta: EstimatorMeta,
    pub(crate) prior: Prior,
    pub(crate) points: Vec<Vec<f64>>,
    pub(crate) weights: Vec<f64>,
    pub(crate) bandwidth: Vec<f64>,
    pub(crate) observation: Vec<f64>,
    pub(crate) epsilon: f64,
    /// Set when the sampler stopped on a generation that accepted nothing.
    pub(crate) warning: bool,
    mixture: MdnParams,
}

impl AbcPosterior {
    /// Normalizes `weights` and fits the Silverman bandwidth.
    pub fn new(
        meta: EstimatorMeta,
        prior: Prior,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        observation: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let (low, high) = prior.bounding_box();
        let width: Vec<f64> = low.iter().zip(&high).map(|(l, h)| h - l).collect();
        let bandwidth = silverman_bandwidth(&points, &weights, &width);
        Self::with_bandwidth(meta, prior, points, weights, bandwidth, observation, epsilon)
    }

    pub fn with_bandwidth(
        meta: EstimatorMeta,
        prior: Prior,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        bandwidth: Vec<f64>,
        observation: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let d = prior.dim();
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::EmptyDataset("ABC posterior needs accepted samples".into()));
        }
        if points.iter().any(|p| p.len() != d) || bandwidth.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                got: points[0].len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) || bandwidth.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidArgument("bad ABC weights or bandwidth".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self::assemble(
            meta,
            prior,
            points,
            weights,
            bandwidth,
            observation,
            epsilon,
        ))
    }

    /// Takes already validated, normalized weights.
    fn assemble(
        meta: EstimatorMeta,
        prior: Prior,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        bandwidth: Vec<f64>,
        observation: Vec<f64>,
        epsilon: f64,
    ) -> Self {
        let mixture = MdnParams::kernel_mixture(&points, &weights, &bandwidth);
        Self {
            meta,
            prior,
            points,
            weights,
            bandwidth,
            observation,
            epsilon,
            warning: false,
            mixture,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    /// The same posterior with every kernel width multiplied by `factor`.
    pub fn scale_bandwidth(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth factor must be positive, got {factor}"
            )));
        }
        let bandwidth = self.bandwidth.iter().map(|h| h * factor).collect();
        let warning = self.warning;
        let mut out = Self::with_bandwidth(
            self.meta,
            self.prior,
            self.points,
            self.weights,
            bandwidth,
            self.observation,
            self.epsilon,
        )?;
        out.warning = warning;
        Ok(out)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn warning(&self) -> bool {
        self.warning
    }

    pub fn distance(&self) -> &'static str {
        "euclidean"
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.f64_vec(&self.observation);
        w.f64(self.epsilon);
        w.u32(self.warning as u32);
        w.f64s(&self.bandwidth);
        w.u64(self.points.len() as u64);
        for (p, wt) in self.points.iter().zip(&self.weights) {
            w.f64(*wt);
            w.f64s(p);
        }
    }

    pub(crate) fn read_body(meta: EstimatorMeta, prior: Prior, r: &mut Reader) -> Result<Self> {
        let d = prior.dim();
        let observation = r.f64_vec()?;
        let epsilon = r.f64()?;
        let warning = r.u32()? != 0;
        let bandwidth = r.f64s(d)?;
        let n = r.u64()? as usize;
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(r.f64()?);
            points.push(r.f64s(d)?);
        }
        // Validate, then keep the stored weights bit for bit.
        Self::with_bandwidth(
            meta.clone(),
            prior.clone(),
            points.clone(),
            weights.clone(),
            bandwidth.clone(),
            observation.clone(),
            epsilon,
        )?;
        let mut p = Self::assemble(meta, prior, points, weights, bandwidth, observation, epsilon);
        p.warning = warning;
        Ok(p)
    }
}

/// Untruncated kernel density `sum_i w_i N(theta; theta_i, diag(h^2))`.
pub fn kde_log_density(p: &AbcPosterior, theta: &[f64]) -> f64 {
    mdn_log_density(&p.mixture, theta)
}

impl PosteriorEstimator for AbcPosterior {
    fn meta(&self) -> &EstimatorMeta {
        &self.meta
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_observation(x)?;
        if theta.len() != self.prior.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.prior.dim(),
                got: theta.len(),
            });
        }
        if !self.prior.contains(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.mixture.log_density_truncated(theta, &self.prior.support()))
    }

    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        self.check_observation(x)?;
        self.mixture
            .sample_truncated(m, &self.prior.support(), rng)
            .into_iter()
            .map(ParameterVector::new)
            .collect()
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn observation(&self) -> Option<&[f64]> {
        Some(&self.observation)
    }
}

/// One simulated draw of the prior predictive and its distance to `x_o`.
pub(crate) struct Proposal {
    pub theta: Vec<f64>,
    pub distance: f64,
}

/// Prior predictive draws; draw `i` uses child stream `i`.
pub(crate) fn prior_proposals<M: AbcModel + ?Sized>(
    model: &M,
    x_o: &[f64],
    n: usize,
    rng: &RngStream,
) -> Result<Vec<Proposal>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64);
            let theta = model.sample_prior(&mut r);
            let x = model.simulate(&theta, &mut r)?;
            if x.len() != x_o.len() {
                return Err(Error::ShapeMismatch {
                    expected: x_o.len(),
                    got: x.len(),
                });
            }
            Ok(Proposal {
                distance: euclidean(&x, x_o),
                theta,
            })
        })
        .collect()
}

/// Rejection ABC with identity summaries and Euclidean distance.
///
/// Accepted draws keep their simulation order. Under [`AcceptRule::Quantile`]
/// exactly `ceil(budget * q)` draws are kept, ties broken by order.
pub fn rejection_abc<M: AbcModel + ?Sized>(
    model: &M,
    x_o: &[f64],
    budget: usize,
    rule: AcceptRule,
    rng: &RngStream,
) -> Result<AbcPosterior> {
    if budget < ABC_MIN_BUDGET {
        return Err(Error::InvalidArgument(format!(
            "ABC budget {budget} < {ABC_MIN_BUDGET}"
        )));
    }
    let keep_count = match rule {
        AcceptRule::Quantile(q) => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "acceptance quantile {q} outside (0, 1]"
                )));
            }
            let k = (budget as f64 * q - 1e-9).ceil() as usize;
            if (budget as f64) * q < 2.0 {
                return Err(Error::InvalidArgument(format!(
                    "budget {budget} x quantile {q} accepts fewer than 2 samples"
                )));
            }
            Some(k.min(budget))
        }
        AcceptRule::Threshold(eps) if eps >= 0.0 => None,
        AcceptRule::Threshold(eps) => {
            return Err(Error::InvalidArgument(format!("negative threshold {eps}")));
        }
    };
    let proposals = prior_proposals(model, x_o, budget, &rng.child_named("proposals"))?;
    let (accepted, epsilon): (Vec<usize>, f64) = match (rule, keep_count) {
        (AcceptRule::Quantile(_), Some(k)) => {
            let mut order: Vec<usize> = (0..budget).collect();
            order.sort_by(|a, b| proposals[*a].distance.total_cmp(&proposals[*b].distance));
            let eps = proposals[order[k - 1]].distance;
            let mut kept = order[..k].to_vec();
            kept.sort_unstable();
            (kept, eps)
        }
        (AcceptRule::Threshold(eps), _) => ((0..budget).filter(|i| proposals[*i].distance <= eps).collect(), eps),
        _ => unreachable!(),
    };
    if accepted.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no simulation within {epsilon} of the observation"
        )));
    }
    let points: Vec<Vec<f64>> = accepted.iter().map(|i| proposals[*i].theta.clone()).collect();
    let weights = vec![1.0; points.len()];
    let meta = EstimatorMeta::new("rej-abc", model.id(), budget, rng.seed());
    AbcPosterior::new(meta, model.kde_prior(), points, weights, x_o.to_vec(), epsilon)
}
