//! Inner optimizers: NAdam for the bulk of training and L-BFGS with a
//! backtracking Armijo search for refinement.

use alloc::vec::Vec;

use crate::Result;

mod lbfgs;
mod nadam;

pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsOutcome, LbfgsState, StepResult};
pub use nadam::{nadam_run, NadamConfig, NadamState};

/// A differentiable scalar function of a parameter vector.
pub trait Objective {
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Function value only; override when cheaper than `evaluate`.
    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.evaluate(theta).map(|(f, _)| f)
    }
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Nadam,
    Lbfgs,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Nadam => "nadam",
            Stage::Lbfgs => "lbfgs",
        }
    }
}

/// One optimizer step, as written to the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub stage: Stage,
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}
