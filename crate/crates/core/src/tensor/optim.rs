use super::graph::Gradients;
use super::params::ParamStore;
use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam moments for every parameter of a store.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        AdamState { config, step: 0, m: zeros(), v: zeros() }
    }
}

/// One Adam update with bias correction, followed by decoupled weight decay
/// `p ← p − lr·λ·p`. Parameters without a gradient only decay.
pub fn adam_step(params: &mut ParamStore, grads: &[Option<Tensor>], state: &mut AdamState, lr: f64) -> Result<(), TensorError> {
    assert!(lr > 0.0, "learning rate must be positive");
    for (id, grad) in params.ids().zip(grads) {
        if let Some(bad) = grad.as_ref().and_then(|g| g.data().iter().find(|x| !x.is_finite())) {
            return Err(TensorError::NonFinite { param: params.name(id).to_string(), value: *bad });
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps, weight_decay } = state.config;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    let ids: Vec<_> = params.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let p = params.get_mut(id).data_mut();
        if let Some(g) = &grads[i] {
            let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        if weight_decay != 0.0 {
            let keep = 1.0 - lr * weight_decay;
            p.iter_mut().for_each(|x| *x *= keep);
        }
    }
    Ok(())
}

/// Convenience wrapper taking graph gradients directly.
impl Gradients {
    pub fn apply_adam(&self, params: &mut ParamStore, state: &mut AdamState, lr: f64) -> Result<(), TensorError> {
        adam_step(params, &self.for_params(params), state, lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleCfg {
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

/// Linear warmup to `peak_lr` over the warmup epochs (epoch `e` gets
/// `peak·(e+1)/warmup`), then constant.
pub fn lr_at(epoch: usize, cfg: &ScheduleCfg) -> f64 {
    if cfg.warmup_epochs == 0 || epoch + 1 >= cfg.warmup_epochs {
        cfg.peak_lr
    } else {
        cfg.peak_lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64
    }
}
