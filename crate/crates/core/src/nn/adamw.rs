use crate::error::{Error, Result};

use super::Mlp;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shaped like the network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Mlp,
    pub v: Mlp,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            step: 0,
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay:
/// `w <- w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(net: &mut Mlp, grad: &Mlp, state: &mut AdamState, lr: f64, wd: f64) -> Result<()> {
    for (l, g) in grad.layers.iter().enumerate() {
        if !g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: l });
        }
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powf(state.step as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(state.step as f64);
    let decay = 1.0 - lr * wd;
    let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w = *w * decay - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grad.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        ndarray::Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|w, g, m, v| update(w, *g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|w, g, m, v| update(w, *g, m, v));
    }
    Ok(())
}
