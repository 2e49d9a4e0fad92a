//! AdamW with decoupled weight decay.

use super::NetParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWState {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            lr,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW update in place. Weight decay is decoupled: parameters shrink by
/// `lr * weight_decay` before the moment-based step.
pub fn adamw_step(state: &mut AdamWState, params: &mut NetParams, grad: &[f64]) -> Result<()> {
    let n = params.weights.len();
    if grad.len() != n || state.first_moment.len() != n {
        return Err(Error::DimMismatch(format!(
            "adamw shapes: {} weights, {} grads, {} moments",
            n,
            grad.len(),
            state.first_moment.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = state.betas;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - state.lr * state.weight_decay;

    for i in 0..n {
        let g = grad[i];
        let w = &mut params.weights[i];
        *w *= decay;
        let m = &mut state.first_moment[i];
        *m = b1 * *m + (1.0 - b1) * g;
        let v = &mut state.second_moment[i];
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
