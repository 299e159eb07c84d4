//! Coin-betting optimizer (COCOB-Backprop): per-coordinate step sizes come
//! from a betting wealth instead of a learning rate.

use crate::error::{FlowError, Result};

pub const DEFAULT_ALPHA: f64 = 100.0;
/// Initial value of the running max gradient magnitude.
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct CocobState {
    pub alpha: f64,
    pub initial_weights: Vec<f64>,
    /// Negated sum of gradients.
    pub grad_sum: Vec<f64>,
    pub abs_grad_sum: Vec<f64>,
    pub max_abs_grad: Vec<f64>,
    pub reward: Vec<f64>,
}

impl CocobState {
    pub fn new(initial_weights: &[f64], alpha: f64) -> CocobState {
        let n = initial_weights.len();
        CocobState {
            alpha,
            initial_weights: initial_weights.to_vec(),
            grad_sum: vec![0.0; n],
            abs_grad_sum: vec![0.0; n],
            max_abs_grad: vec![EPSILON; n],
            reward: vec![0.0; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.initial_weights.len()
    }

    /// One update of `weights` with `grad`. Non-finite gradients are rejected
    /// and leave both state and weights untouched.
    pub fn step(&mut self, grad: &[f64], weights: &mut [f64]) -> Result<()> {
        let n = self.dimension();
        if grad.len() != n || weights.len() != n {
            return Err(FlowError::DimensionMismatch { expected: n, actual: grad.len().min(weights.len()) });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(FlowError::NonFiniteGradient);
        }
        for i in 0..n {
            let g = grad[i];
            let l = self.max_abs_grad[i].max(g.abs());
            self.max_abs_grad[i] = l;
            self.abs_grad_sum[i] += g.abs();
            self.reward[i] = (self.reward[i] - (weights[i] - self.initial_weights[i]) * g).max(0.0);
            self.grad_sum[i] -= g;
            let denom = l * (self.abs_grad_sum[i] + l).max(self.alpha * l);
            weights[i] = self.initial_weights[i] + self.grad_sum[i] / denom * (l + self.reward[i]);
        }
        Ok(())
    }
}
