//! Central-difference gradients and the Adam update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central-difference gradient of `loss` at `at` with a common step `h`.
pub fn grad<F>(loss: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    grad_with_steps(loss, at, &vec![h; at.len()])
}

/// Central-difference gradient with a step per coordinate.
pub fn grad_with_steps<F>(loss: F, at: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if steps.len() != at.len() {
        return Err(Error::invalid("one step per coordinate required"));
    }
    let mut x = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for (i, &h) in steps.iter().enumerate() {
        x[i] = at[i] + h;
        let up = loss(&x);
        x[i] = at[i] - h;
        let down = loss(&x);
        x[i] = at[i];
        for value in [up, down] {
            if !value.is_finite() {
                return Err(Error::GradientEvaluation { index: i, value });
            }
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            config,
        }
    }
}

/// One bias-corrected Adam step, descending along `grad`.
pub fn adam_step(state: &mut AdamState, grad: &[f64], params: &mut [f64]) -> Result<()> {
    if grad.len() != state.m.len() || params.len() != state.m.len() {
        return Err(Error::invalid("gradient, parameters and moments differ in length"));
    }
    let AdamConfig {
        step_size,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((x, g), (m, v)) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= step_size * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}
