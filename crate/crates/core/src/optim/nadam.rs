use alloc::vec;
use alloc::vec::Vec;

use super::{Objective, Stage, StepRecord};
use crate::math::{norm2, powi, sqrt};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step size; held fixed for a whole run.
    pub alpha: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, alpha: 1e-3 }
    }
}

/// Moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NadamState {
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub tau: u64,
    pub config: NadamConfig,
}

impl NadamState {
    pub fn new(dim: usize, config: NadamConfig) -> Self {
        Self { m: vec![0.0; dim], n: vec![0.0; dim], tau: 0, config }
    }

    /// One update of `theta` in place:
    ///
    /// ```text
    /// m     = b1 m + (1 - b1) g
    /// n     = b2 n + (1 - b2) g^2
    /// n_hat = n / (1 - b2^tau)
    /// m_hat = b1^(tau+1) m / (1 - b1^(tau+1)) + (1 - b1) g / (1 - b1^tau)
    /// theta = theta - alpha m_hat / (sqrt(n_hat) + eps)
    /// ```
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::LengthMismatch { expected: self.m.len(), found: theta.len().max(grad.len()) });
        }
        let NadamConfig { beta1: b1, beta2: b2, eps, alpha } = self.config;
        self.tau += 1;
        let tau = self.tau as i32;
        let b1_t = powi(b1, tau);
        let b1_t1 = powi(b1, tau + 1);
        let b2_t = powi(b2, tau);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.n[i] = b2 * self.n[i] + (1.0 - b2) * g * g;
            let n_hat = self.n[i] / (1.0 - b2_t);
            let m_hat = b1_t1 * self.m[i] / (1.0 - b1_t1) + (1.0 - b1) * g / (1.0 - b1_t);
            theta[i] -= alpha * m_hat / (sqrt(n_hat) + eps);
        }
        Ok(())
    }
}

/// `steps` NAdam updates from `theta0`; each step's loss is reported to `log`.
pub fn nadam_run(
    objective: &mut dyn Objective,
    theta0: &[f64],
    steps: usize,
    config: NadamConfig,
    log: &mut dyn FnMut(&StepRecord),
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidInput("NAdam needs at least one step".into()));
    }
    if !(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0) {
        return Err(Error::InvalidInput("beta1 and beta2 must lie in (0, 1)".into()));
    }
    let mut theta = theta0.to_vec();
    let mut state = NadamState::new(theta.len(), config);
    for step in 1..=steps {
        let (loss, grad) = objective.evaluate(&theta)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        log(&StepRecord { stage: Stage::Nadam, step, loss, grad_norm: norm2(&grad) });
        state.step(&mut theta, &grad)?;
    }
    Ok(theta)
}
