//! Mixture of diagonal Gaussians: the conditional density family of the
//! posterior network, and (with shared scales) the kernel density estimate.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use super::{log_sum_exp, sigmoid, softplus};
use crate::rng::RngStream;

/// Floor added to every softplus scale.
pub const MIN_SCALE: f64 = 1e-4;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Head width for `k` components in `d` dimensions: logits, means, raw scales.
pub fn mdn_head_len(k: usize, d: usize) -> usize {
    k * (1 + 2 * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnParams {
    /// Normalized log mixture weights.
    pub log_weights: Vec<f64>,
    /// `k x d`, row-major.
    pub means: Vec<f64>,
    /// `k x d`, row-major, strictly positive.
    pub scales: Vec<f64>,
    pub dim: usize,
}

/// Upper-tail standard normal probability.
fn phi_c(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Probability of `[a, b]` under `N(0, 1)`, accurate in both tails.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        phi_c(a) - phi_c(b)
    } else if b <= 0.0 {
        phi_c(-b) - phi_c(-a)
    } else {
        1.0 - phi_c(b) - phi_c(-a)
    }
}

/// Inverse-CDF draw from `N(0, 1)` truncated to `[a, b]`.
fn truncated_standard_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let z = if a >= 0.0 {
        let (hi, lo) = (phi_c(a), phi_c(b));
        std::f64::consts::SQRT_2 * erfc_inv(2.0 * (lo + u * (hi - lo)))
    } else if b <= 0.0 {
        let (hi, lo) = (phi_c(-b), phi_c(-a));
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * (lo + u * (hi - lo)))
    } else {
        let (lo, hi) = (1.0 - phi_c(a), 1.0 - phi_c(b));
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * (lo + u * (hi - lo)))
    };
    if z.is_finite() {
        z.clamp(a, b)
    } else {
        0.5 * (a.max(-1e300) + b.min(1e300))
    }
}

impl MdnParams {
    /// Parses one head output row `[logits | means | raw scales]`.
    pub fn from_head(head: &[f64], k: usize, d: usize) -> Self {
        assert_eq!(head.len(), mdn_head_len(k, d));
        let logits = &head[..k];
        let lse = log_sum_exp(logits);
        Self {
            log_weights: logits.iter().map(|l| l - lse).collect(),
            means: head[k..k + k * d].to_vec(),
            scales: head[k + k * d..].iter().map(|r| softplus(*r) + MIN_SCALE).collect(),
            dim: d,
        }
    }

    /// Equal-weight mixture with shared per-dimension bandwidths, or weighted
    /// when `weights` is given.
    pub fn kernel_mixture(points: &[Vec<f64>], weights: &[f64], bandwidth: &[f64]) -> Self {
        let d = bandwidth.len();
        let total: f64 = weights.iter().sum();
        Self {
            log_weights: weights.iter().map(|w| (w / total).ln()).collect(),
            means: points.iter().flat_map(|p| p.iter().copied()).collect(),
            scales: (0..points.len()).flat_map(|_| bandwidth.iter().copied()).collect(),
            dim: d,
        }
    }

    pub fn components(&self) -> usize {
        self.log_weights.len()
    }

    fn component_log_density(&self, k: usize, theta: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for j in 0..d {
            let sc = self.scales[k * d + j];
            let z = (theta[j] - self.means[k * d + j]) / sc;
            s += -0.5 * z * z - sc.ln() - LN_SQRT_2PI;
        }
        s
    }

    /// Log mass of each component inside `support` (one interval per
    /// dimension, infinite ends allowed).
    fn component_log_masses(&self, support: &[(f64, f64)]) -> Vec<f64> {
        let d = self.dim;
        (0..self.components())
            .map(|k| {
                (0..d)
                    .map(|j| {
                        let (m, s) = (self.means[k * d + j], self.scales[k * d + j]);
                        normal_interval((support[j].0 - m) / s, (support[j].1 - m) / s).ln()
                    })
                    .sum()
            })
            .collect()
    }

    /// Log probability of `support` under the mixture.
    pub fn log_mass_in(&self, support: &[(f64, f64)]) -> f64 {
        let terms: Vec<f64> = self
            .component_log_masses(support)
            .iter()
            .zip(&self.log_weights)
            .map(|(m, w)| m + w)
            .collect();
        log_sum_exp(&terms)
    }

    /// Density of the mixture restricted and renormalized to `support`.
    pub fn log_density_truncated(&self, theta: &[f64], support: &[(f64, f64)]) -> f64 {
        if theta.iter().zip(support).any(|(t, (a, b))| t < a || t > b) {
            return f64::NEG_INFINITY;
        }
        mdn_log_density(self, theta) - self.log_mass_in(support)
    }

    /// Exact draws from the mixture restricted to `support`: pick a component
    /// by its truncated mass, then invert each truncated marginal.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, m: usize, support: &[(f64, f64)], rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.dim;
        let masses = self.component_log_masses(support);
        let logits: Vec<f64> = masses.iter().zip(&self.log_weights).map(|(a, b)| a + b).collect();
        let cdf = cumulative(&logits);
        (0..m)
            .map(|_| {
                let k = pick(&cdf, rng);
                (0..d)
                    .map(|j| {
                        let (mu, s) = (self.means[k * d + j], self.scales[k * d + j]);
                        let (a, b) = ((support[j].0 - mu) / s, (support[j].1 - mu) / s);
                        let z = if normal_interval(a, b) > 0.3 {
                            loop {
                                let z: f64 = StandardNormal.sample(rng);
                                if z >= a && z <= b {
                                    break z;
                                }
                            }
                        } else {
                            truncated_standard_normal(a, b, rng)
                        };
                        (mu + s * z).clamp(support[j].0, support[j].1)
                    })
                    .collect()
            })
            .collect()
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (k, lw) in self.log_weights.iter().enumerate() {
            for j in 0..d {
                out[j] += lw.exp() * self.means[k * d + j];
            }
        }
        out
    }
}

fn cumulative(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    let mut acc = 0.0;
    log_weights
        .iter()
        .map(|lw| {
            acc += (lw - lse).exp();
            acc
        })
        .collect()
}

fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf.last().copied().unwrap_or(1.0);
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// Log density of the (untruncated) mixture.
pub fn mdn_log_density(p: &MdnParams, theta: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..p.components())
        .map(|k| p.log_weights[k] + p.component_log_density(k, theta))
        .collect();
    log_sum_exp(&terms)
}

/// Ancestral sampling: component, then independent Gaussians.
pub fn mdn_sample(p: &MdnParams, m: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let d = p.dim;
    let cdf = cumulative(&p.log_weights);
    (0..m)
        .map(|_| {
            let k = pick(&cdf, rng);
            (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(rng);
                    p.means[k * d + j] + p.scales[k * d + j] * z
                })
                .collect()
        })
        .collect()
}

/// Mean negative log density over rows and its gradient with respect to the
/// raw head outputs (logits, means, pre-softplus scales).
pub fn mdn_nll_grad(head: ArrayView2<f64>, thetas: ArrayView2<f64>, k: usize) -> (f64, Array2<f64>) {
    let n = head.nrows();
    let d = thetas.ncols();
    let mut grad = Array2::zeros(head.raw_dim());
    let mut total = 0.0;
    let mut comp = vec![0.0; k];
    for i in 0..n {
        let row = head.row(i);
        let row = row.as_slice().expect("contiguous head rows");
        let theta = thetas.row(i);
        let p = MdnParams::from_head(row, k, d);
        for (c, slot) in comp.iter_mut().enumerate() {
            let mut s = p.log_weights[c];
            for j in 0..d {
                let sc = p.scales[c * d + j];
                let z = (theta[j] - p.means[c * d + j]) / sc;
                s += -0.5 * z * z - sc.ln() - LN_SQRT_2PI;
            }
            *slot = s;
        }
        let lp = log_sum_exp(&comp);
        total -= lp;
        let mut g = grad.row_mut(i);
        for c in 0..k {
            let resp = (comp[c] - lp).exp();
            g[c] = (p.log_weights[c].exp() - resp) / n as f64;
            for j in 0..d {
                let idx = c * d + j;
                let sc = p.scales[idx];
                let diff = theta[j] - p.means[idx];
                g[k + idx] = -resp * diff / (sc * sc) / n as f64;
                let dscale = -resp * (diff * diff / (sc * sc * sc) - 1.0 / sc);
                g[k + k * d + idx] = dscale * sigmoid(row[k + k * d + idx]) / n as f64;
            }
        }
    }
    (total / n as f64, grad)
}
