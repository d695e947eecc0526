use serde::{Deserialize, Serialize};

use super::params::{AdamState, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning-rate decay per update: `lr_t = lr / (1 + decay · t)`.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.0,
        }
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(config: &AdamConfig, theta: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) {
    let lr = config.learning_rate / (1.0 + config.decay * state.step as f64);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let (b1, b2) = (config.beta1, config.beta2);
    for (((w, &g), m), v) in theta
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}
