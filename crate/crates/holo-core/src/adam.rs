//! ADAM optimizer over flat real parameter grids.

use crate::error::{Error, Result};
use crate::grid::RealGrid;

/// Bias-corrected ADAM state for one parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// First moment (mean of gradients).
    m: Vec<f64>,
    /// Second moment (mean of squared gradients).
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "adam: state {} vs params {} vs grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Grid-shaped convenience wrapper around [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut RealGrid, grads: &RealGrid) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(Error::DimensionMismatch(format!(
            "adam: params {}x{} vs grads {}x{}",
            params.height(),
            params.width(),
            grads.height(),
            grads.width()
        )));
    }
    state.step(params.data_mut(), grads.data())
}
