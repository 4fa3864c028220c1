use ndarray::Ix2;
use ndarray::Zip;

use super::store::ParameterStore;
use super::tensor::{all_finite, Tensor};
use crate::error::{Error, Result};

/// First/second moment accumulators for one parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl AdamState {
    pub fn new(dim: Ix2) -> Self {
        Self {
            m: Tensor::zeros(dim),
            v: Tensor::zeros(dim),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of every parameter in `store`, then clears the
/// gradients. Nothing is modified if any gradient is non-finite.
///
/// Entries whose gradient is exactly zero keep their value; only their
/// moments decay.
pub fn adam_step(store: &mut ParameterStore, cfg: &AdamConfig) -> Result<()> {
    if cfg.lr <= 0.0 || !cfg.lr.is_finite() {
        return Err(Error::contract(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    if let Some((name, _)) = store.iter().find(|(_, p)| !all_finite(&p.grad)) {
        return Err(Error::NonFinite {
            param: format!("{name} (gradient)"),
        });
    }
    let AdamConfig { lr, beta1, beta2, eps } = *cfg;
    for (_, p) in store.iter_mut() {
        let state = &mut p.adam;
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        Zip::from(&mut p.value)
            .and(&mut p.grad)
            .and(&mut state.m)
            .and(&mut state.v)
            .for_each(|w, g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                if *g != 0.0 {
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
                *g = 0.0;
            });
    }
    Ok(())
}
