//! Composite objective `lambda1 * MSE + lambda2 * hinge(dF/dprice)` and its
//! exact gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{TimeSeriesDataset, Window};
use crate::gru::{backward, forward, mixed_grad_with_trace, price_jacobian, ForwardTrace, GruParams, PriceJacobian, Triangular};
use crate::{Error, Result};

/// Which Jacobian entries the hinge penalizes at each scored step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhysicsScope {
    /// Only `J[t][t]`.
    SameStep,
    /// Every `J[t][tau]`, `tau <= t`.
    #[default]
    AllLags,
}

impl PhysicsScope {
    fn covers(self, t: usize, tau: usize) -> bool {
        match self {
            PhysicsScope::SameStep => t == tau,
            PhysicsScope::AllLags => tau <= t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub scope: PhysicsScope,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 0.1, scope: PhysicsScope::AllLags }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(Error::InvalidInput("loss weights must be finite and non-negative".into()));
        }
        if self.lambda1 == 0.0 && self.lambda2 == 0.0 {
            return Err(Error::InvalidInput("lambda1 and lambda2 cannot both be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub data_loss: f64,
    pub physics_loss: f64,
    pub total: f64,
    /// Share of penalized Jacobian entries that are strictly positive.
    pub violation_fraction: f64,
}

/// A scored window of a sequence. The model runs over `inputs` (rows
/// `0..window.end`) and losses use rows `window.start..window.end`.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub window: Window,
    pub price_channel: usize,
}

impl<'a> Problem<'a> {
    pub fn new(inputs: &'a [f64], targets: &'a [f64], window: Window, price_channel: usize) -> Self {
        Self { inputs, targets, window, price_channel }
    }

    pub fn from_dataset(ds: &'a TimeSeriesDataset, window: Window, normalized_target: bool) -> Self {
        Self {
            inputs: ds.inputs(window.end),
            targets: ds.targets(normalized_target),
            window,
            price_channel: ds.price_channel,
        }
    }

    fn check(&self, p: &GruParams) -> Result<()> {
        if self.window.is_empty() {
            return Err(Error::InvalidInput("empty loss window".into()));
        }
        let d = p.input_dim();
        if self.inputs.len() != self.window.end * d {
            return Err(Error::LengthMismatch { expected: self.window.end * d, found: self.inputs.len() });
        }
        if self.targets.len() < self.window.end {
            return Err(Error::LengthMismatch { expected: self.window.end, found: self.targets.len() });
        }
        Ok(())
    }

    fn window_targets(&self) -> &[f64] {
        &self.targets[self.window.range()]
    }
}

/// Mean squared error.
pub fn data_loss(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty prediction vector".into()));
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// `(1/N) sum_t sum_{tau in scope} max(0, J[t][tau])` over all rows of `jac`.
pub fn physics_loss(jac: &PriceJacobian, scope: PhysicsScope) -> f64 {
    physics_loss_window(jac, Window::new(0, jac.steps()), scope)
}

/// Hinge penalty restricted to rows `window`; `N` is the window length.
pub fn physics_loss_window(jac: &PriceJacobian, window: Window, scope: PhysicsScope) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let sum: f64 = penalized(jac, window, scope).map(|v| v.max(0.0)).sum();
    sum / window.len() as f64
}

fn penalized(jac: &PriceJacobian, window: Window, scope: PhysicsScope) -> impl Iterator<Item = f64> + '_ {
    window.range().flat_map(move |t| {
        let row = jac.row(t);
        let lo = if scope == PhysicsScope::SameStep { t } else { 0 };
        row[lo..].iter().copied()
    })
}

/// Share of penalized entries in `window` that are strictly positive.
pub fn violation_fraction(jac: &PriceJacobian, window: Window, scope: PhysicsScope) -> f64 {
    let (mut pos, mut total) = (0usize, 0usize);
    for v in penalized(jac, window, scope) {
        total += 1;
        if v > 0.0 {
            pos += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        pos as f64 / total as f64
    }
}

fn breakdown(tr: &ForwardTrace, jac: &PriceJacobian, problem: &Problem<'_>, w: &LossWeights) -> Result<LossBreakdown> {
    let data = data_loss(&tr.f[problem.window.range()], problem.window_targets())?;
    let phys = physics_loss_window(jac, problem.window, w.scope);
    Ok(LossBreakdown {
        data_loss: data,
        physics_loss: phys,
        total: w.lambda1 * data + w.lambda2 * phys,
        violation_fraction: violation_fraction(jac, problem.window, w.scope),
    })
}

/// One forward pass plus one price Jacobian.
pub fn total_loss(p: &GruParams, problem: &Problem<'_>, w: &LossWeights) -> Result<LossBreakdown> {
    problem.check(p)?;
    let tr = forward(p, problem.inputs)?;
    let jac = price_jacobian(p, &tr, problem.price_channel)?;
    breakdown(&tr, &jac, problem, w)
}

/// Breakdown and gradient together.
pub fn loss_and_grad(p: &GruParams, problem: &Problem<'_>, w: &LossWeights) -> Result<(LossBreakdown, Vec<f64>)> {
    problem.check(p)?;
    let tr = forward(p, problem.inputs)?;
    let jac = price_jacobian(p, &tr, problem.price_channel)?;
    let b = breakdown(&tr, &jac, problem, w)?;
    let grad = gradient(p, &tr, Some(&jac), problem, w)?;
    Ok((b, grad))
}

pub fn total_grad(p: &GruParams, problem: &Problem<'_>, w: &LossWeights) -> Result<Vec<f64>> {
    loss_and_grad(p, problem, w).map(|(_, g)| g)
}

/// Total loss and gradient for optimization. Skips the Jacobian entirely
/// when `lambda2 == 0`.
pub fn value_and_grad(p: &GruParams, problem: &Problem<'_>, w: &LossWeights) -> Result<(f64, Vec<f64>)> {
    if w.lambda2 != 0.0 {
        return loss_and_grad(p, problem, w).map(|(b, g)| (b.total, g));
    }
    problem.check(p)?;
    let tr = forward(p, problem.inputs)?;
    let data = data_loss(&tr.f[problem.window.range()], problem.window_targets())?;
    let grad = gradient(p, &tr, None, problem, w)?;
    Ok((w.lambda1 * data, grad))
}

/// Total loss only, with the same `lambda2 == 0` shortcut.
pub fn value(p: &GruParams, problem: &Problem<'_>, w: &LossWeights) -> Result<f64> {
    if w.lambda2 != 0.0 {
        return total_loss(p, problem, w).map(|b| b.total);
    }
    problem.check(p)?;
    let tr = forward(p, problem.inputs)?;
    Ok(w.lambda1 * data_loss(&tr.f[problem.window.range()], problem.window_targets())?)
}

fn gradient(
    p: &GruParams,
    tr: &ForwardTrace,
    jac: Option<&PriceJacobian>,
    problem: &Problem<'_>,
    w: &LossWeights,
) -> Result<Vec<f64>> {
    let n = problem.window.len() as f64;
    let mut dl_df = vec![0.0; tr.steps];
    for t in problem.window.range() {
        dl_df[t] = w.lambda1 * 2.0 / n * (tr.f[t] - problem.targets[t]);
    }
    let mut grad = backward(p, tr, &dl_df)?;
    if let (Some(jac), true) = (jac, w.lambda2 != 0.0) {
        let mut weights = Triangular::zeros(tr.steps);
        let mut any = false;
        for t in problem.window.range() {
            for tau in 0..=t {
                if w.scope.covers(t, tau) && jac.get(t, tau).is_some_and(|v| v > 0.0) {
                    weights.set(t, tau, w.lambda2 / n);
                    any = true;
                }
            }
        }
        if any {
            let phys = mixed_grad_with_trace(p, tr, problem.price_channel, &weights)?;
            for (g, q) in grad.iter_mut().zip(&phys) {
                *g += q;
            }
        }
    }
    Ok(grad)
}
