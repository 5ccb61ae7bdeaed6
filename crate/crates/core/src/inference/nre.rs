use ndarray::{s, Array2};
use rand::seq::SliceRandom;

use super::sampler::{sample_unnormalized, SamplerConfig};
use crate::codec::{Reader, Writer};
use crate::dataset::{sample_joint, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMeta, PosteriorEstimator};
use crate::nn::{train_classifier_resampled, LabeledSet, Mlp, Standardizer, TrainConfig, TrainOutcome};
use crate::prior::Prior;
use crate::rng::RngStream;
use crate::simulators::{Benchmark, FeatureMap};
use crate::types::ParameterVector;

/// Smallest dataset a ratio classifier is trained on.
pub const NRE_MIN_DATASET: usize = 64;

/// The simulations an amortized cell trains on. The sequential estimator's
/// first round draws from the same stream, so one round reproduces it.
pub fn simulate_training_set(benchmark: &Benchmark, n: usize, rng: &RngStream) -> Result<Dataset> {
    sample_joint(benchmark, n, &rng.child_named("simulations"))
}

/// Classifier `d̂(theta, x)` between joint and marginal pairs, read as a
/// likelihood-to-evidence ratio through `log r̂ = logit d̂`.
#[derive(Debug, Clone)]
pub struct RatioEstimator {
    pub(crate) meta: EstimatorMeta,
    pub(crate) prior: Prior,
    pub(crate) net: Mlp,
    pub(crate) theta_norm: Standardizer,
    pub(crate) x_norm: Standardizer,
    pub(crate) features: FeatureMap,
    pub(crate) observation: Option<Vec<f64>>,
    pub sampler: SamplerConfig,
}

impl PartialEq for RatioEstimator {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta
            && self.prior == other.prior
            && self.net == other.net
            && self.theta_norm == other.theta_norm
            && self.x_norm == other.x_norm
            && self.features == other.features
            && self.observation == other.observation
    }
}

impl RatioEstimator {
    pub fn from_parts(
        meta: EstimatorMeta,
        prior: Prior,
        net: Mlp,
        theta_norm: Standardizer,
        x_norm: Standardizer,
        features: FeatureMap,
    ) -> Result<Self> {
        let inputs = theta_norm.dim() + x_norm.dim();
        if net.input_dim() != inputs || net.output_dim() != 1 || theta_norm.dim() != prior.dim() {
            return Err(Error::ShapeMismatch {
                expected: inputs,
                got: net.input_dim(),
            });
        }
        Ok(Self {
            meta,
            prior,
            net,
            theta_norm,
            x_norm,
            features,
            observation: None,
            sampler: SamplerConfig::default(),
        })
    }

    /// Ties the estimator to the single observation it was fit for.
    pub fn with_observation(mut self, x: Vec<f64>) -> Self {
        self.observation = Some(x);
        self
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn x_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.features.apply(x);
        if f.len() != self.x_norm.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.x_norm.dim(),
                got: f.len(),
            });
        }
        Ok(self.x_norm.apply(&f))
    }

    /// `logit d̂(theta, x)` for every theta; no support check.
    pub fn log_ratio_batch(&self, thetas: &[ParameterVector], x: &[f64]) -> Result<Vec<f64>> {
        self.check_observation(x)?;
        let xz = self.x_input(x)?;
        let dt = self.theta_norm.dim();
        let mut inputs = Array2::zeros((thetas.len(), dt + xz.len()));
        for (mut row, t) in inputs.outer_iter_mut().zip(thetas) {
            if t.len() != dt {
                return Err(Error::ShapeMismatch {
                    expected: dt,
                    got: t.len(),
                });
            }
            let row = row.as_slice_mut().expect("standard layout");
            self.theta_norm.apply_into(t, &mut row[..dt]);
            row[dt..].copy_from_slice(&xz);
        }
        Ok(self.net.forward_batch(inputs.view())?.column(0).to_vec())
    }

    pub fn log_ratio(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.log_ratio_batch(&[ParameterVector::new(theta.to_vec())?], x)?[0])
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.u32(self.features.code());
        self.theta_norm.write(w);
        self.x_norm.write(w);
        self.net.write(w);
    }

    pub(crate) fn read_body(meta: EstimatorMeta, prior: Prior, r: &mut Reader) -> Result<Self> {
        let features = FeatureMap::from_code(r.u32()?);
        let theta_norm = Standardizer::read(r)?;
        let x_norm = Standardizer::read(r)?;
        let net = Mlp::read(r)?;
        Self::from_parts(meta, prior, net, theta_norm, x_norm, features)
    }
}

/// `log p(theta) + logit d̂(theta, x)`, `-inf` outside the prior support.
pub fn nre_log_posterior(r: &RatioEstimator, theta: &[f64], x: &[f64]) -> Result<f64> {
    r.log_density(theta, x)
}

impl PosteriorEstimator for RatioEstimator {
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
        let logits = self.log_ratio_batch(thetas, x)?;
        Ok(thetas
            .iter()
            .zip(logits)
            .map(|(t, l)| {
                let lp = self.prior.log_density(t);
                if lp == f64::NEG_INFINITY {
                    lp
                } else {
                    lp + l
                }
            })
            .collect())
    }

    fn sample(&self, m: usize, x: &[f64], rng: &mut RngStream) -> Result<Vec<ParameterVector>> {
        self.check_observation(x)?;
        sample_unnormalized(self, &self.sampler, m, x, rng)
    }

    fn is_normalized(&self) -> bool {
        false
    }

    fn observation(&self) -> Option<&[f64]> {
        self.observation.as_deref()
    }
}

/// A cyclic derangement: `sigma(pi(k)) = pi(k + 1)` for a random permutation
/// `pi`, so no index maps to itself.
pub fn derangement(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..n).collect();
    pi.shuffle(rng);
    let mut sigma = vec![0; n];
    for k in 0..n {
        sigma[pi[k]] = pi[(k + 1) % n];
    }
    sigma
}

/// Standardized rows of one contiguous block of the training data, ready to
/// be paired into joint and marginal examples.
pub(crate) struct PairBlocks {
    theta: Array2<f64>,
    x: Array2<f64>,
    /// Row ranges whose marginal pairs are shuffled among themselves.
    blocks: Vec<std::ops::Range<usize>>,
}

impl PairBlocks {
    pub(crate) fn new(theta: Array2<f64>, x: Array2<f64>, blocks: Vec<std::ops::Range<usize>>) -> Self {
        Self { theta, x, blocks }
    }

    fn len(&self) -> usize {
        self.theta.nrows()
    }

    /// Joint rows labelled 1 followed by within-block deranged rows labelled 0.
    pub(crate) fn labeled(&self, rng: &mut RngStream) -> LabeledSet {
        let n = self.len();
        let (dt, dx) = (self.theta.ncols(), self.x.ncols());
        let mut inputs = Array2::zeros((2 * n, dt + dx));
        inputs.slice_mut(s![..n, ..dt]).assign(&self.theta);
        inputs.slice_mut(s![..n, dt..]).assign(&self.x);
        inputs.slice_mut(s![n.., dt..]).assign(&self.x);
        for block in &self.blocks {
            let sigma = derangement(block.len(), rng);
            for (k, src) in sigma.into_iter().enumerate() {
                let (dst, src) = (n + block.start + k, block.start + src);
                inputs.slice_mut(s![dst, ..dt]).assign(&self.theta.row(src));
            }
        }
        let mut targets = Array2::zeros((2 * n, 1));
        targets.slice_mut(s![..n, ..]).fill(1.0);
        LabeledSet { inputs, targets }
    }
}

/// Training and validation rows for a ratio classifier, with normalizers
/// fitted on the training rows.
pub(crate) struct NrePrepared {
    pub theta_norm: Standardizer,
    pub x_norm: Standardizer,
    pub train: PairBlocks,
    pub valid: LabeledSet,
}

/// Splits each block into its first 90% (training) and last 10%
/// (validation), standardizes, and fixes the validation marginal pairs.
pub(crate) fn prepare_pairs(
    ds: &Dataset,
    blocks: &[std::ops::Range<usize>],
    features: FeatureMap,
    validation_fraction: f64,
    norms: Option<(&Standardizer, &Standardizer)>,
    rng: &RngStream,
) -> Result<NrePrepared> {
    let feats: Vec<Vec<f64>> = ds.samples.iter().map(|s| features.apply(&s.x)).collect();
    let mut train_idx = Vec::new();
    let mut valid_idx = Vec::new();
    let mut train_blocks = Vec::new();
    let mut valid_blocks = Vec::new();
    for b in blocks {
        let n_valid = ((b.len() as f64 * validation_fraction).floor() as usize).max(2);
        if b.len() < n_valid + 2 {
            return Err(Error::EmptyDataset(format!("block of {} rows is too small", b.len())));
        }
        let cut = b.end - n_valid;
        train_blocks.push(train_idx.len()..train_idx.len() + (cut - b.start));
        train_idx.extend(b.start..cut);
        valid_blocks.push(valid_idx.len()..valid_idx.len() + n_valid);
        valid_idx.extend(cut..b.end);
    }
    let (theta_norm, x_norm) = match norms {
        Some((t, x)) => (t.clone(), x.clone()),
        None => (
            Standardizer::fit(train_idx.iter().map(|i| ds.samples[*i].theta.values()), ds.theta_dim),
            Standardizer::fit(train_idx.iter().map(|i| feats[*i].as_slice()), feats[0].len()),
        ),
    };
    let rows = |idx: &[usize]| {
        let th = theta_norm.apply_rows(idx.iter().map(|i| ds.samples[*i].theta.values()));
        let x = x_norm.apply_rows(idx.iter().map(|i| feats[*i].as_slice()));
        (th, x)
    };
    let (tt, tx) = rows(&train_idx);
    let (vt, vx) = rows(&valid_idx);
    let valid = PairBlocks::new(vt, vx, valid_blocks).labeled(&mut rng.child_named("validation-pairs"));
    Ok(NrePrepared {
        theta_norm,
        x_norm,
        train: PairBlocks::new(tt, tx, train_blocks),
        valid,
    })
}

/// Trains a ratio classifier on `ds`: joint pairs against pairs whose theta is
/// re-matched by a fresh derangement every epoch.
pub fn train_nre(
    benchmark: &Benchmark,
    ds: &Dataset,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<(RatioEstimator, TrainOutcome)> {
    if ds.len() < NRE_MIN_DATASET {
        return Err(Error::InvalidArgument(format!(
            "ratio estimation needs at least {NRE_MIN_DATASET} pairs, got {}",
            ds.len()
        )));
    }
    fit_blocks(benchmark, ds, &[0..ds.len()], cfg, rng, None)
}

/// Shared by the amortized and sequential estimators. With `warm` the
/// network starts from the given estimator and keeps its normalizers.
pub(crate) fn fit_blocks(
    benchmark: &Benchmark,
    ds: &Dataset,
    blocks: &[std::ops::Range<usize>],
    cfg: &TrainConfig,
    rng: &RngStream,
    warm: Option<&RatioEstimator>,
) -> Result<(RatioEstimator, TrainOutcome)> {
    let features = benchmark.feature_map();
    let norms = warm.map(|w| (&w.theta_norm, &w.x_norm));
    let prep = prepare_pairs(ds, blocks, features, cfg.validation_fraction, norms, rng)?;
    let inputs = prep.theta_norm.dim() + prep.x_norm.dim();
    let net = match warm {
        Some(w) => w.net.clone(),
        None => Mlp::new(&cfg.sizes(inputs, 1), &mut rng.child_named("init")),
    };
    let train = &prep.train;
    let outcome = train_classifier_resampled(
        net,
        &mut |r| train.labeled(r),
        &prep.valid,
        cfg,
        &mut rng.child_named("epochs"),
    )?;
    let meta = EstimatorMeta::new("nre", benchmark.id(), ds.len(), rng.seed());
    let est = RatioEstimator::from_parts(
        meta,
        benchmark.prior().clone(),
        outcome.net.clone(),
        prep.theta_norm,
        prep.x_norm,
        features,
    )?;
    Ok((est, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{logit, sigmoid};
    use crate::simulators::BenchmarkKind;
    use crate::types::{JointSample, Observable};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn derangement_has_no_fixed_points() {
        let mut rng = RngStream::new(1);
        for n in [2, 3, 10, 257] {
            let s = derangement(n, &mut rng);
            let mut seen = s.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            assert!(s.iter().enumerate().all(|(i, j)| i != *j));
        }
    }

    proptest! {
        #[test]
        fn bayes_optimal_logit_is_log_ratio(p1 in 1e-6f64..1.0, p0 in 1e-6f64..1.0) {
            let d = p1 / (p1 + p0);
            prop_assert!((logit(d) - (p1 / p0).ln()).abs() < 1e-9);
        }

        #[test]
        fn sigmoid_logit_round_trip(p in 1e-9f64..(1.0 - 1e-9)) {
            prop_assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
    }

    fn zero_estimator(kind: BenchmarkKind) -> RatioEstimator {
        let bm = Benchmark::new(kind);
        let dt = bm.theta_dim();
        let dx = bm.feature_map().len(bm.observable_len());
        let net = Mlp::new(&[dt + dx, 8, 1], &mut RngStream::new(0)).zeros_like();
        RatioEstimator::from_parts(
            EstimatorMeta::new("nre", bm.id(), 0, 0),
            bm.prior().clone(),
            net,
            Standardizer::identity(dt),
            Standardizer::identity(dx),
            bm.feature_map(),
        )
        .unwrap()
    }

    #[test]
    fn half_classifier_gives_prior() {
        let est = zero_estimator(BenchmarkKind::Slcp);
        let x = vec![0.5; 8];
        for theta in [[0.0, 0.0], [-2.9, 1.0], [2.5, -0.3]] {
            let lp = est.log_density(&theta, &x).unwrap();
            assert_eq!(lp, est.prior().log_density(&theta));
        }
        assert_eq!(est.log_density(&[3.5, 0.0], &x).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn observation_guard() {
        let est = zero_estimator(BenchmarkKind::Gaussian).with_observation(vec![0.0; 4]);
        assert!(est.log_density(&[0.0], &[0.0; 4]).is_ok());
        assert!(matches!(
            est.log_density(&[0.0], &[1.0; 4]),
            Err(Error::ObservationMismatch)
        ));
    }

    #[test]
    fn labeled_pairs_layout() {
        let theta = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let x = Array2::from_shape_fn((6, 1), |(i, _)| -(i as f64));
        let pb = PairBlocks::new(theta, x, vec![0..3, 3..6]);
        let set = pb.labeled(&mut RngStream::new(5));
        for i in 0..6 {
            assert_eq!(set.inputs[[i, 0]], -set.inputs[[i, 1]]);
            assert_eq!(set.targets[[i, 0]], 1.0);
            let (t, xv) = (set.inputs[[6 + i, 0]], set.inputs[[6 + i, 1]]);
            assert_eq!(xv, -(i as f64));
            assert_ne!(t, i as f64);
            // Shuffling stays inside the block.
            assert_eq!((t as usize) / 3, i / 3);
            assert_eq!(set.targets[[6 + i, 0]], 0.0);
        }
    }

    #[test]
    fn independent_x_gives_near_zero_logits() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let mut rng = RngStream::new(11);
        let mut ds = Dataset::new("gaussian", 11, 1, 4);
        for _ in 0..8192 {
            let theta = bm.prior().sample(&mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            ds.samples.push(JointSample {
                theta: ParameterVector::new(theta).unwrap(),
                x: Observable::new(x).unwrap(),
            });
        }
        let cfg = TrainConfig {
            epochs: 20,
            hidden: vec![32, 32],
            ..TrainConfig::default()
        };
        let (est, _) = train_nre(&bm, &ds, &cfg, &RngStream::new(12)).unwrap();
        let mut total = 0.0;
        for _ in 0..1000 {
            let theta = bm.prior().sample(&mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            total += est.log_ratio(&theta, &x).unwrap().abs();
        }
        assert!(total / 1000.0 < 0.1, "{}", total / 1000.0);
    }

    #[test]
    fn small_dataset_is_rejected() {
        let bm = Benchmark::new(BenchmarkKind::Gaussian);
        let ds = sample_joint(&bm, 32, &RngStream::new(1)).unwrap();
        assert!(train_nre(&bm, &ds, &TrainConfig::default(), &RngStream::new(1)).is_err());
    }
}
