use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{ParamId, ParamStore};
use crate::tensor::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one tensor at step `t` (already
/// incremented, so `t >= 1`).
pub fn adam_update(theta: &mut [Float], m: &mut [Float], v: &mut [Float], g: &[Float], t: u64, c: &AdamConfig) {
    let (b1, b2) = (c.beta1 as Float, c.beta2 as Float);
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    let lr = c.learning_rate as Float;
    let eps = c.eps as Float;
    for i in 0..theta.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1 as Float;
        let v_hat = v[i] / bc2 as Float;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First and second moment buffers for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<Float>>,
    v: Vec<Vec<Float>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, id: ParamId) -> (&[Float], &[Float]) {
        (&self.m[id.0], &self.v[id.0])
    }

    /// One optimizer step over the parameters that received a gradient;
    /// parameters absent from `grads` keep their values and moments.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Vec<Float>)]) -> Result<(), TrainError> {
        for (id, g) in grads {
            if g.len() != store.get(*id).len() {
                return Err(TrainError::GradientShape {
                    param: store.name(*id).to_string(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    param: store.name(*id).to_string(),
                });
            }
        }
        self.t += 1;
        for (id, g) in grads {
            adam_update(
                store.get_mut(*id).data_mut(),
                &mut self.m[id.0],
                &mut self.v[id.0],
                g,
                self.t,
                &self.config,
            );
        }
        Ok(())
    }
}
