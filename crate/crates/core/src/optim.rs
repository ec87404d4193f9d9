//! Adam optimizer state and update step.

use serde::{Deserialize, Serialize};

/// Moment estimates plus step counter; the learning rate lives here so a
/// schedule can adjust it between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(param_len: usize, learning_rate: f64) -> Self {
        AdamState {
            first: vec![0.0; param_len],
            second: vec![0.0; param_len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.first.len());
    state.step += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    let lr = state.learning_rate;
    for i in 0..params.len() {
        let g = grads[i];
        state.first[i] = b1 * state.first[i] + (1.0 - b1) * g;
        state.second[i] = b2 * state.second[i] + (1.0 - b2) * g * g;
        let m_hat = state.first[i] / bc1;
        let v_hat = state.second[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}
