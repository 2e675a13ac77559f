//! Adam with bias correction.

use ndarray::Zip;

use crate::model::params::Tensors;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Tensors,
    pub v: Tensors,
    pub step: u64,
}

impl OptState {
    pub fn new(like: &Tensors) -> Self {
        OptState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }
}

pub fn adam_step(params: &mut Tensors, grads: &Tensors, opt: &mut OptState, config: &AdamConfig) {
    opt.step += 1;
    let t = opt.step as i32;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *config;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let params = params.named_mut();
    let grads = grads.named();
    let ms = opt.m.named_mut();
    let vs = opt.v.named_mut();
    for (((( _, p), (_, g)), (_, m)), (_, v)) in params.into_iter().zip(grads).zip(ms).zip(vs) {
        Zip::from(p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
}

/// Rescales `grads` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut Tensors, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
