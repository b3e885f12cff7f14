use alloc::vec::Vec;

use super::param::Param;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Param], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
        Self { config, step: 0, first: zeros(), second: zeros() }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [Param], grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), found: grads.len() });
    }
    for (index, ((p, g), m)) in params.iter().zip(grads).zip(&state.first).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::ShapeMismatch { index, expected: p.len(), found: g.len() });
        }
    }
    state.step += 1;
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(beta1, f64::from(t));
    let c2 = 1.0 - libm::pow(beta2, f64::from(t));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.value[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
    }
    Ok(())
}
