use crate::codec::{Reader, Writer};
use crate::dataset::{split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator};
use crate::nn::{mdn_head_len, train_mdn, LabeledSet, MdnParams, Mlp, Standardizer, TrainConfig, TrainOutcome};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::simulators::{Benchmark, FeatureMap};
use crate::types::ParameterVector;

/// A mixture-density posterior `p̂(theta | x)`.
///
/// The mixture lives in standardized parameter space and is restricted to
/// the (standardized) prior support and renormalized exactly, so both the
/// density and the sampler respect the support.
#[derive(Debug, Clone, PartialEq)]
pub struct NpeEstimator {
    pub(crate) meta: EstimatorMeta,
    pub(crate) prior: Prior,
    pub(crate) net: Mlp,
    pub(crate) components: usize,
    pub(crate) theta_norm: Standardizer,
    pub(crate) x_norm: Standardizer,
    pub(crate) features: FeatureMap,
}

impl NpeEstimator {
    pub fn from_parts(
        meta: EstimatorMeta,
        prior: Prior,
        net: Mlp,
        components: usize,
        theta_norm: Standardizer,
        x_norm: Standardizer,
        features: FeatureMap,
    ) -> Result<Self> {
        let d = prior.dim();
        if net.input_dim() != x_norm.dim() || net.output_dim() != mdn_head_len(components, d) || theta_norm.dim() != d {
            return Err(Error::ShapeMismatch {
                expected: mdn_head_len(components, d),
                got: net.output_dim(),
            });
        }
        Ok(Self {
            meta,
            prior,
            net,
            components,
            theta_norm,
            x_norm,
            features,
        })
    }

    /// Mixture over standardized parameters at `x`.
    pub fn mixture(&self, x: &[f64]) -> Result<MdnParams> {
        let f = self.features.apply(x);
        if f.len() != self.x_norm.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.x_norm.dim(),
                got: f.len(),
            });
        }
        let head = self.net.forward(&self.x_norm.apply(&f))?;
        Ok(MdnParams::from_head(&head, self.components, self.prior.dim()))
    }

    fn standardized_support(&self) -> Vec<(f64, f64)> {
        self.prior
            .support()
            .iter()
            .zip(self.theta_norm.mean.iter().zip(&self.theta_norm.std))
            .map(|((a, b), (m, s))| ((a - m) / s, (b - m) / s))
            .collect()
    }

    /// Posterior mean in parameter space, ignoring truncation.
    pub fn untruncated_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.theta_norm.invert(&self.mixture(x)?.mean()))
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.u32(self.features.code());
        w.u32(self.components as u32);
        self.theta_norm.write(w);
        self.x_norm.write(w);
        self.net.write(w);
    }

    pub(crate) fn read_body(meta: EstimatorMeta, prior: Prior, r: &mut Reader) -> Result<Self> {
        let features = FeatureMap::from_code(r.u32()?);
        let components = r.u32()? as usize;
        let theta_norm = Standardizer::read(r)?;
        let x_norm = Standardizer::read(r)?;
        let net = Mlp::read(r)?;
        Self::from_parts(meta, prior, net, components, theta_norm, x_norm, features)
    }
}

impl PosteriorEstimator for NpeEstimator {
    fn meta(&self) -> &EstimatorMeta {
        &self.meta
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.log_density_batch(&[ParameterVector::new(theta.to_vec())?], x)?[0])
    }

    fn log_density_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        let mix = self.mixture(x)?;
        let support = self.standardized_support();
        let log_mass = mix.log_mass_in(&support);
        let jac = self.theta_norm.log_jacobian();
        thetas
            .iter()
            .map(|t| {
                if t.len() != self.prior.dim() {
                    return Err(Error::ShapeMismatch {
                        expected: self.prior.dim(),
                        got: t.len(),
                    });
                }
                if !self.prior.contains(t) {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(crate::nn::mdn_log_density(&mix, &self.theta_norm.apply(t)) - log_mass + jac)
            })
            .collect()
    }

    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        let mix = self.mixture(x)?;
        let support = self.prior.support();
        mix.sample_truncated(m, &self.standardized_support(), rng)
            .into_iter()
            .map(|z| {
                let t = self
                    .theta_norm
                    .invert(&z)
                    .into_iter()
                    .zip(&support)
                    .map(|(v, (a, b))| v.clamp(*a, *b))
                    .collect();
                ParameterVector::new(t)
            })
            .collect()
    }

    fn is_normalized(&self) -> bool {
        true
    }
}

/// Fits the mixture-density posterior by maximum likelihood on `ds`.
pub fn train_npe(
    benchmark: &Benchmark,
    ds: &Dataset,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<(NpeEstimator, TrainOutcome)> {
    let parts = split_dataset(ds, &[1.0 - cfg.validation_fraction, cfg.validation_fraction])?;
    let (train, valid) = (&parts[0], &parts[1]);
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyDataset(format!("{} pairs are too few to split", ds.len())));
    }
    let features = benchmark.feature_map();
    let feats = |d: &Dataset| d.samples.iter().map(|s| features.apply(&s.x)).collect::<Vec<_>>();
    let (train_f, valid_f) = (feats(train), feats(valid));
    let theta_norm = Standardizer::fit(train.samples.iter().map(|s| s.theta.values()), ds.theta_dim);
    let x_norm = Standardizer::fit(train_f.iter().map(|f| f.as_slice()), train_f[0].len());
    let set = |d: &Dataset, f: &[Vec<f64>]| LabeledSet {
        inputs: x_norm.apply_rows(f.iter().map(|v| v.as_slice())),
        targets: theta_norm.apply_rows(d.samples.iter().map(|s| s.theta.values())),
    };
    let (train_set, valid_set) = (set(train, &train_f), set(valid, &valid_f));
    let k = cfg.components;
    let net = Mlp::new(
        &cfg.sizes(x_norm.dim(), mdn_head_len(k, ds.theta_dim)),
        &mut rng.child_named("init"),
    );
    let outcome = train_mdn(net, &train_set, &valid_set, cfg, &mut rng.child_named("epochs"))?;
    let meta = EstimatorMeta::new("npe", benchmark.id(), ds.len(), rng.seed());
    let est = NpeEstimator::from_parts(
        meta,
        benchmark.prior().clone(),
        outcome.net.clone(),
        k,
        theta_norm,
        x_norm,
        features,
    )?;
    Ok((est, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_joint;
    use crate::simulators::BenchmarkKind;

    fn quick(kind: BenchmarkKind, n: usize) -> (Benchmark, NpeEstimator) {
        let bm = Benchmark::new(kind);
        let ds = sample_joint(&bm, n, &RngStream::new(1)).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            hidden: vec![16, 16],
            components: 3,
            ..TrainConfig::default()
        };
        let (est, _) = train_npe(&bm, &ds, &cfg, &RngStream::new(2)).unwrap();
        (bm, est)
    }

    #[test]
    fn samples_stay_in_support() {
        for kind in [BenchmarkKind::Slcp, BenchmarkKind::Mg1, BenchmarkKind::LotkaVolterra] {
            let (bm, est) = quick(kind, 256);
            let x = sample_joint(&bm, 1, &RngStream::new(9)).unwrap().samples[0].x.clone();
            let draws = est.sample(2000, &x, &mut RngStream::new(3)).unwrap();
            assert!(draws.iter().all(|t| bm.prior().contains(t)), "{kind:?}");
            let lps = est.log_density_batch(&draws, &x).unwrap();
            assert!(lps.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn truncated_density_normalizes_on_prior_box() {
        let (bm, est) = quick(BenchmarkKind::Slcp, 256);
        let x = sample_joint(&bm, 1, &RngStream::new(4)).unwrap().samples[0].x.clone();
        let n = 400;
        let h = 6.0 / n as f64;
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let t = vec![-3.0 + (i as f64 + 0.5) * h, -3.0 + (j as f64 + 0.5) * h];
                pts.push(ParameterVector::new(t).unwrap());
            }
        }
        let total: f64 = est
            .log_density_batch(&pts, &x)
            .unwrap()
            .iter()
            .map(|l| l.exp() * h * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        assert_eq!(est.log_density(&[3.1, 0.0], &x).unwrap(), f64::NEG_INFINITY);
    }
}
