//! Adam optimizer with bias correction.

use crate::autograd::params::ParamStore;
use crate::error::{Error, Result};

/// Optimizer state spanning one parameter set: per-parameter moment buffers
/// plus a shared step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl AdamState {
    /// Defaults beta1=0.9, beta2=0.999, epsilon=1e-8.
    pub fn new(lr: f64, params: &ParamStore) -> Self {
        let first = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let second = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, first, second }
    }

    /// Apply one update from the gradients stored on `params`. Missing
    /// gradients count as zero. Non-finite gradients abort with a
    /// divergence error before any parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "adam state tracks {} parameters, store has {}",
                self.first.len(),
                params.len()
            )));
        }
        for (name, t) in params.iter() {
            if let Some(g) = &t.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged(format!("non-finite gradient in '{name}'")));
                }
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, (_, t)) in params.iter_mut().enumerate() {
            let Some(g) = t.grad.take() else { continue };
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            let data = t.data_mut();
            adam_kernel(data, &g, m, v, self.lr, self.beta1, self.beta2, self.epsilon, bc1, bc2);
            t.grad = Some(g);
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_kernel(
    p: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        let gi = g[i] as f64;
        let mi = beta1 * m[i] as f64 + (1.0 - beta1) * gi;
        let vi = beta2 * v[i] as f64 + (1.0 - beta2) * gi * gi;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        p[i] = (p[i] as f64 - lr * m_hat / (v_hat.sqrt() + epsilon)) as f32;
    }
}

/// Single-tensor Adam update; `step` is the 1-based step this update
/// represents. Useful for tests and standalone use.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    p: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if g.len() != p.len() || m.len() != p.len() || v.len() != p.len() {
        return Err(Error::Shape("adam_update: buffer lengths differ".into()));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    adam_kernel(p, g, m, v, lr, beta1, beta2, epsilon, bc1, bc2);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = vec![1.5f32];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut p, &[0.0], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p[0], 1.5);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // p=1, g=1, lr=0.1: m_hat=1, v_hat=1, p' = 1 - 0.1/(1+1e-8) ~ 0.9
        let mut p = vec![1.0f32];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6, "p = {}", p[0]);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = vec![1.0f32];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        let mut prev = p[0];
        for step in 1..=2 {
            adam_update(&mut p, &[1.0], &mut m, &mut v, step, 0.1, 0.9, 0.999, 1e-8).unwrap();
            assert!(p[0] < prev, "step {step}: {} !< {prev}", p[0]);
            prev = p[0];
        }
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = vec![1.0f32];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        let err = adam_update(&mut p, &[f32::NAN], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8);
        assert!(matches!(err, Err(crate::error::Error::Diverged(_))));
    }
}
