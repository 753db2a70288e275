//! Bias-corrected ADAM.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            step: 0,
        }
    }
}

/// Applies one ADAM step to `params`.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(contract!(
            "gradient ({}) and moment ({}) sizes must match {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        ));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training(alloc::format!("non-finite gradient at parameter {i}")));
    }
    state.step += 1;
    let t = state.step as f64;
    let correction1 = 1.0 - libm::pow(cfg.beta1, t);
    let correction2 = 1.0 - libm::pow(cfg.beta2, t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic_converges() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut theta = [0.0];
        let mut state = AdamState::new(1);
        for _ in 0..2000 {
            let grad = [2.0 * (theta[0] - 3.0)];
            adam_update(&mut theta, &grad, &mut state, &cfg).unwrap();
        }
        assert!((theta[0] - 3.0).abs() <= 1e-3, "{}", theta[0]);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut theta = [1.5, -2.0];
        let mut state = AdamState::new(2);
        adam_update(&mut theta, &[0.0, 0.0], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(theta, [1.5, -2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn identical_streams_identical_trajectories() {
        let cfg = AdamConfig::default();
        let (mut a, mut b) = ([0.3, 0.7], [0.3, 0.7]);
        let (mut sa, mut sb) = (AdamState::new(2), AdamState::new(2));
        for k in 0..50 {
            let g = [libm::sin(k as f64), libm::cos(k as f64)];
            adam_update(&mut a, &g, &mut sa, &cfg).unwrap();
            adam_update(&mut b, &g, &mut sb, &cfg).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut theta = [1.0];
        let mut state = AdamState::new(1);
        let err = adam_update(&mut theta, &[f64::NAN], &mut state, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
        assert_eq!(theta, [1.0]);
        assert_eq!(state.step, 0);
    }
}
