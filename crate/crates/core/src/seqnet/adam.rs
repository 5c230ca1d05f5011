use serde::{Deserialize, Serialize};

use super::model::{EncoderDecoderConfig, Parameters};
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Parameters<S>,
    pub v: Parameters<S>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(config: &EncoderDecoderConfig) -> Self {
        AdamState {
            step: 0,
            m: Parameters::zeros(config),
            v: Parameters::zeros(config),
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn update(&mut self, cfg: &AdamConfig, params: &mut Parameters<S>, grads: &Parameters<S>) {
        self.step += 1;
        let b1 = S::from_f64(cfg.beta1);
        let b2 = S::from_f64(cfg.beta2);
        let one = S::one();
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        // Fold both bias corrections into the step size.
        let lr = S::from_f64(cfg.learning_rate * c2.sqrt() / c1);
        let eps = S::from_f64(cfg.epsilon * c2.sqrt());
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                p[k] = p[k] - lr * m[k] / (v[k].sqrt() + eps);
            }
        }
    }
}
