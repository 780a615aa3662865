//! Adam optimizer with bias correction.

use nalgebra::{DMatrix, DVector};

use super::mlp::{Gradients, Mlp};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: usize,
    m_weights: Vec<DMatrix<f64>>,
    v_weights: Vec<DMatrix<f64>>,
    m_biases: Vec<DVector<f64>>,
    v_biases: Vec<DVector<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            v_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            m_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            v_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }
}

/// One bias-corrected Adam step over every parameter of the network.
pub fn adam_update(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - state.beta1.powi(t);
    let correction2 = 1.0 - state.beta2.powi(t);
    for l in 0..net.n_layers() {
        for idx in 0..net.weights[l].len() {
            let g = grads.d_weights[l][idx];
            let m = &mut state.m_weights[l][idx];
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            let v = &mut state.v_weights[l][idx];
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            net.weights[l][idx] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        for idx in 0..net.biases[l].len() {
            let g = grads.d_biases[l][idx];
            let m = &mut state.m_biases[l][idx];
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            let v = &mut state.v_biases[l][idx];
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            net.biases[l][idx] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}
