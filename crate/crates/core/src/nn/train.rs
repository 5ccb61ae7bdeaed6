use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::{adamw_step, mdn_nll_grad, sigmoid, softplus, AdamState, Mlp};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Optimization settings shared by every trained estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    pub hidden: Vec<usize>,
    /// Mixture components of the posterior network head.
    pub components: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            validation_fraction: 0.1,
            hidden: vec![128, 128, 128],
            components: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.validation_fraction > 0.0
            && self.validation_fraction < 1.0
            && self.components > 0
            && self.hidden.iter().all(|h| *h > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }

    /// Layer sizes `[inputs, hidden..., outputs]`.
    pub fn sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden);
        s.push(outputs);
        s
    }
}

/// Network inputs with per-row targets: a `n x 1` label column for the
/// classifier, standardized parameters for the mixture head.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    /// 0 means the initial weights were never improved on.
    pub best_epoch: usize,
    pub validation_losses: Vec<f64>,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, Copy)]
enum Loss {
    Bce,
    Mdn { components: usize },
}

/// Mean binary cross-entropy on logits and its gradient.
pub fn bce_with_logits(logits: ArrayView2<f64>, labels: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    ndarray::Zip::from(&mut grad)
        .and(logits)
        .and(labels)
        .for_each(|g, z, y| {
            loss += y * softplus(-z) + (1.0 - y) * softplus(*z);
            *g = (sigmoid(*z) - y) / n;
        });
    (loss / n, grad)
}

impl Loss {
    fn eval(self, out: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, Array2<f64>) {
        match self {
            Loss::Bce => bce_with_logits(out, targets),
            Loss::Mdn { components } => mdn_nll_grad(out, targets, components),
        }
    }
}

fn mean_loss(net: &Mlp, data: &LabeledSet, loss: Loss) -> Result<f64> {
    const CHUNK: usize = 2048;
    let n = data.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let out = net.forward_batch(data.inputs.slice(s![start..end, ..]))?;
        let (l, _) = loss.eval(out.view(), data.targets.slice(s![start..end, ..]));
        total += l * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

fn fit(
    mut net: Mlp,
    loss: Loss,
    make_train: &mut dyn FnMut(&mut RngStream) -> LabeledSet,
    valid: &LabeledSet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if valid.is_empty() {
        return Err(Error::EmptyDataset("validation split is empty".into()));
    }
    let first = make_train(rng);
    if first.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    let initial_train_loss = mean_loss(&net, &first, loss)?;
    let mut best_loss = mean_loss(&net, valid, loss)?;
    if !best_loss.is_finite() || !initial_train_loss.is_finite() {
        return Err(Error::TrainingDiverged("non-finite loss at initialization".into()));
    }
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut validation_losses = Vec::with_capacity(cfg.epochs);
    let mut state = AdamState::new(&net);
    let mut order: Vec<usize> = Vec::new();
    let mut current = Some(first.clone());
    for epoch in 1..=cfg.epochs {
        let data = match current.take() {
            Some(d) => d,
            None => make_train(rng),
        };
        order.clear();
        order.extend(0..data.len());
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.inputs.select(Axis(0), chunk);
            let y = data.targets.select(Axis(0), chunk);
            let tape = net.forward_recorded(x.view())?;
            let (l, upstream) = loss.eval(tape.output.view(), y.view());
            if !l.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite batch loss at epoch {epoch}"
                )));
            }
            let grad = net.backward(&tape, upstream.view());
            adamw_step(&mut net, &grad, &mut state, cfg.learning_rate, cfg.weight_decay)?;
        }
        let v = mean_loss(&net, valid, loss)?;
        if !v.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        validation_losses.push(v);
        if v < best_loss {
            best_loss = v;
            best = net.clone();
            best_epoch = epoch;
        }
    }
    let final_train_loss = mean_loss(&best, &first, loss)?;
    Ok(TrainOutcome {
        net: best,
        best_epoch,
        validation_losses,
        initial_train_loss,
        final_train_loss,
    })
}

/// Trains a single-logit classifier with binary cross-entropy and returns the
/// weights of the best validation epoch.
pub fn train_classifier(
    net: Mlp,
    train: &LabeledSet,
    valid: &LabeledSet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    check_labels(train)?;
    check_labels(valid)?;
    fit(net, Loss::Bce, &mut |_| train.clone(), valid, cfg, rng)
}

/// Like [`train_classifier`] but rebuilds the training set every epoch, e.g.
/// to redraw the negative class.
pub fn train_classifier_resampled(
    net: Mlp,
    make_train: &mut dyn FnMut(&mut RngStream) -> LabeledSet,
    valid: &LabeledSet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    check_labels(valid)?;
    fit(net, Loss::Bce, make_train, valid, cfg, rng)
}

/// Maximizes the mean conditional log density of a mixture head whose
/// targets are the (standardized) parameters.
pub fn train_mdn(
    net: Mlp,
    train: &LabeledSet,
    valid: &LabeledSet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    let loss = Loss::Mdn {
        components: cfg.components,
    };
    fit(net, loss, &mut |_| train.clone(), valid, cfg, rng)
}

fn check_labels(set: &LabeledSet) -> Result<()> {
    if set.targets.ncols() != 1 || set.targets.iter().any(|y| *y != 0.0 && *y != 1.0) {
        return Err(Error::InvalidArgument("classifier labels must be 0 or 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mdn_head_len, mdn_sample, MdnParams};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden: vec![32, 32],
            components: 2,
            ..TrainConfig::default()
        }
    }

    fn random_set(n: usize, rng: &mut RngStream, f: impl Fn(f64, &mut RngStream) -> f64) -> LabeledSet {
        let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 1), |(i, _)| f(x[[i, 0]], rng));
        LabeledSet { inputs: x, targets: y }
    }

    #[test]
    fn uninformative_labels_reach_ln2() {
        let mut rng = RngStream::new(1);
        let label = |_x: f64, r: &mut RngStream| if r.random::<bool>() { 1.0 } else { 0.0 };
        let train = random_set(4000, &mut rng, label);
        let valid = random_set(2000, &mut rng, label);
        let net = Mlp::new(&[1, 32, 32, 1], &mut rng);
        let out = train_classifier(net, &train, &valid, &small_cfg(20), &mut rng).unwrap();
        let best = out.validation_losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((best - 2f64.ln()).abs() < 0.02, "{best}");
    }

    #[test]
    fn separable_threshold_is_learned() {
        let mut rng = RngStream::new(2);
        let label = |x: f64, _r: &mut RngStream| if x > 0.2 { 1.0 } else { 0.0 };
        let train = random_set(2000, &mut rng, label);
        let valid = random_set(500, &mut rng, label);
        let net = Mlp::new(&[1, 32, 32, 1], &mut rng);
        let out = train_classifier(net, &train, &valid, &small_cfg(100), &mut rng).unwrap();
        let logits = out.net.forward_batch(valid.inputs.view()).unwrap();
        let correct = logits
            .iter()
            .zip(valid.targets.iter())
            .filter(|(z, y)| (**z > 0.0) == (**y == 1.0))
            .count();
        assert!(correct as f64 / valid.len() as f64 > 0.95);
        assert!(out.final_train_loss <= out.initial_train_loss);
        assert!(out.net.is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut rng = RngStream::new(3);
            let label = |x: f64, _r: &mut RngStream| if x > 0.0 { 1.0 } else { 0.0 };
            let train = random_set(500, &mut rng, label);
            let valid = random_set(100, &mut rng, label);
            let net = Mlp::new(&[1, 16, 1], &mut rng);
            train_classifier(net, &train, &valid, &small_cfg(5), &mut rng)
                .unwrap()
                .net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_validation_and_bad_labels_error() {
        let mut rng = RngStream::new(4);
        let train = random_set(10, &mut rng, |_, _| 1.0);
        let empty = LabeledSet {
            inputs: Array2::zeros((0, 1)),
            targets: Array2::zeros((0, 1)),
        };
        let net = Mlp::new(&[1, 4, 1], &mut rng);
        assert!(train_classifier(net.clone(), &train, &empty, &small_cfg(1), &mut rng).is_err());
        let bad = random_set(10, &mut rng, |_, _| 0.5);
        assert!(train_classifier(net, &bad, &train, &small_cfg(1), &mut rng).is_err());
    }

    /// KS distance between samples and the standard normal CDF.
    fn ks_standard_normal(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = cdf(*x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn mdn_learns_independent_standard_normal() {
        let mut rng = RngStream::new(5);
        let make = |n: usize, rng: &mut RngStream| {
            let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
            let t = Array2::from_shape_fn((n, 1), |_| StandardNormal.sample(rng));
            LabeledSet { inputs: x, targets: t }
        };
        let train = make(20000, &mut rng);
        let valid = make(2000, &mut rng);
        let cfg = small_cfg(30);
        let net = Mlp::new(&cfg.sizes(2, mdn_head_len(cfg.components, 1)), &mut rng);
        let out = train_mdn(net, &train, &valid, &cfg, &mut rng).unwrap();
        for x in [[-0.9, 0.5], [0.0, 0.0], [0.7, -0.7]] {
            let head = out.net.forward(&x).unwrap();
            let p = MdnParams::from_head(&head, cfg.components, 1);
            let draws: Vec<f64> = mdn_sample(&p, 5000, &mut rng).into_iter().map(|t| t[0]).collect();
            let ks = ks_standard_normal(draws);
            assert!(ks < 0.05, "x = {x:?}: KS {ks}");
        }
        assert!(out.final_train_loss <= out.initial_train_loss);
    }
}
