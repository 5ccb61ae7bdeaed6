//! A small dense-network stack: SELU multilayer perceptrons with exact
//! reverse-mode gradients, AdamW, a binary-classification objective and a
//! mixture-density head.

mod adamw;
mod mdn;
mod mlp;
mod norm;
mod train;

pub use adamw::{adamw_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use mdn::{mdn_head_len, mdn_log_density, mdn_nll_grad, mdn_sample, MdnParams, MIN_SCALE};
pub use mlp::{selu, selu_grad, Dense, Mlp, Tape};
pub use norm::Standardizer;
pub use train::{
    bce_with_logits, train_classifier, train_classifier_resampled, train_mdn, LabeledSet, TrainConfig, TrainOutcome,
};

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(sum(exp(v)))` without overflow; `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sigmoid_logit_round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
