use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::{Objective, Stage, StepRecord};
use crate::math::{dot, norm2, norm_inf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of `(s, y)` pairs kept.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Pairs with `y.s` at or below this are not stored.
    pub curvature_floor: f64,
    /// Steepest-descent step used when the line search fails.
    pub fallback_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 6, c1: 1e-4, shrink: 0.5, max_halvings: 30, curvature_floor: 1e-10, fallback_step: 1e-4 }
    }
}

/// Ring of recent `(s, y)` pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsState {
    pub pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    pub config: LbfgsConfig,
}

/// Outcome of one [`LbfgsState::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    /// Gradient is exactly zero; nothing to do.
    Converged,
    Moved { theta: Vec<f64>, f: f64, grad: Vec<f64>, step_len: f64 },
    /// Every backtracking trial failed the Armijo test.
    NoDescent,
}

impl LbfgsState {
    pub fn new(config: LbfgsConfig) -> Self {
        Self { pairs: VecDeque::with_capacity(config.memory), config }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Store `(s, y)` if `y.s` exceeds the curvature floor, evicting the oldest
    /// pair when full. Returns whether the pair was kept.
    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        if !(dot(&y, &s) > self.config.curvature_floor) || self.config.memory == 0 {
            return false;
        }
        if self.pairs.len() == self.config.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        true
    }

    /// `-H g` by the two-loop recursion, with `H_0 = gamma I` and
    /// `gamma = s.y / y.y` from the newest pair (1 when empty).
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y) in self.pairs.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        let gamma = self.pairs.back().map_or(1.0, |(s, y)| dot(s, y) / dot(y, y));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y), (a, rho)) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        for qi in q.iter_mut() {
            *qi = -*qi;
        }
        q
    }

    /// One quasi-Newton step from `theta` (value `f`, gradient `grad`) with a
    /// backtracking Armijo search starting at step 1, followed by one secant
    /// refinement of the accepted step.
    pub fn step(&mut self, theta: &[f64], f: f64, grad: &[f64], objective: &mut dyn Objective) -> Result<StepResult> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("non-finite gradient".into()));
        }
        if grad.iter().all(|&g| g == 0.0) {
            return Ok(StepResult::Converged);
        }
        let mut d = self.direction(grad);
        let mut slope = dot(grad, &d);
        if !(slope < 0.0) {
            // curvature pairs gave an ascent direction; restart from steepest descent
            self.pairs.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = dot(grad, &d);
        }
        let cfg = self.config;
        let mut alpha = 1.0;
        let mut trial = theta.to_vec();
        for _ in 0..=cfg.max_halvings {
            for ((t, x), di) in trial.iter_mut().zip(theta).zip(&d) {
                *t = x + alpha * di;
            }
            let ft = objective.value(&trial).unwrap_or(f64::INFINITY);
            if ft.is_finite() && ft <= f + cfg.c1 * alpha * slope {
                let (mut f_new, mut g_new) = objective.evaluate(&trial)?;
                if let Some(better) = self.refine(theta, f, slope, &d, alpha, f_new, &g_new, objective) {
                    (trial, f_new, g_new, alpha) = better;
                }
                let s: Vec<f64> = d.iter().map(|di| alpha * di).collect();
                let y: Vec<f64> = g_new.iter().zip(grad).map(|(a, b)| a - b).collect();
                if !self.push_pair(s, y) {
                    // negative curvature: stale pairs would keep the steps tiny
                    self.pairs.clear();
                }
                return Ok(StepResult::Moved { theta: trial, f: f_new, grad: g_new, step_len: alpha });
            }
            alpha *= cfg.shrink;
        }
        Ok(StepResult::NoDescent)
    }
}

type Refined = (Vec<f64>, f64, Vec<f64>, f64);

impl LbfgsState {
    /// Secant minimizer along `d` from the slopes at 0 and `alpha`; exact on a
    /// quadratic. Kept only if it passes Armijo and lowers the value.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        theta: &[f64],
        f: f64,
        slope: f64,
        d: &[f64],
        alpha: f64,
        f_acc: f64,
        g_acc: &[f64],
        objective: &mut dyn Objective,
    ) -> Option<Refined> {
        let slope_acc = dot(g_acc, d);
        let curv = slope_acc - slope;
        if !(curv > 0.0) {
            return None;
        }
        let a = alpha * (-slope) / curv;
        if !a.is_finite() || a <= 0.0 || (a - alpha).abs() <= 1e-12 * alpha {
            return None;
        }
        let trial: Vec<f64> = theta.iter().zip(d).map(|(x, di)| x + a * di).collect();
        let (ft, gt) = objective.evaluate(&trial).ok()?;
        let ok = ft.is_finite() && gt.iter().all(|g| g.is_finite()) && ft <= f + self.config.c1 * a * slope && ft < f_acc;
        ok.then_some((trial, ft, gt, a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Iterate until `|grad|_inf < grad_tol` or `max_iters`. Every accepted step
/// decreases the objective, so the returned point is the best one seen.
pub fn lbfgs_run(
    objective: &mut dyn Objective,
    theta0: &[f64],
    max_iters: usize,
    grad_tol: f64,
    config: LbfgsConfig,
    log: &mut dyn FnMut(&StepRecord),
) -> Result<LbfgsOutcome> {
    if max_iters == 0 {
        return Err(Error::InvalidInput("L-BFGS needs at least one iteration".into()));
    }
    if !(grad_tol > 0.0) {
        return Err(Error::InvalidInput("grad_tol must be positive".into()));
    }
    let mut theta = theta0.to_vec();
    let (mut f, mut grad) = objective.evaluate(&theta)?;
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    let mut state = LbfgsState::new(config);
    for iter in 1..=max_iters {
        if norm_inf(&grad) < grad_tol {
            return Ok(LbfgsOutcome { theta, f, iters: iter - 1, converged: true });
        }
        match state.step(&theta, f, &grad, objective)? {
            StepResult::Converged => return Ok(LbfgsOutcome { theta, f, iters: iter - 1, converged: true }),
            StepResult::Moved { theta: t, f: fv, grad: g, .. } => {
                theta = t;
                f = fv;
                grad = g;
            }
            StepResult::NoDescent => {
                let trial: Vec<f64> = theta.iter().zip(&grad).map(|(x, g)| x - config.fallback_step * g).collect();
                match objective.evaluate(&trial) {
                    Ok((ft, gt)) if ft.is_finite() && ft < f => {
                        state.pairs.clear();
                        theta = trial;
                        f = ft;
                        grad = gt;
                    }
                    _ => return Ok(LbfgsOutcome { theta, f, iters: iter, converged: false }),
                }
            }
        }
        log(&StepRecord { stage: Stage::Lbfgs, step: iter, loss: f, grad_norm: norm2(&grad) });
    }
    let converged = norm_inf(&grad) < grad_tol;
    Ok(LbfgsOutcome { theta, f, iters: max_iters, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn half_sq(t: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((0.5 * dot(t, t), t.to_vec()))
    }

    #[test]
    fn first_step_is_unit_steepest_descent() {
        let mut st = LbfgsState::new(LbfgsConfig::default());
        let th = [4.0, -3.0];
        let mut obj = half_sq;
        match st.step(&th, 12.5, &th, &mut obj).unwrap() {
            StepResult::Moved { theta, step_len, .. } => {
                assert_eq!(theta, vec![0.0, 0.0]);
                assert_eq!(step_len, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_gradient_converged() {
        let mut st = LbfgsState::new(LbfgsConfig::default());
        let mut obj = half_sq;
        assert_eq!(st.step(&[0.0, 0.0], 0.0, &[0.0, 0.0], &mut obj).unwrap(), StepResult::Converged);
    }

    #[test]
    fn low_curvature_pair_skipped() {
        let mut st = LbfgsState::new(LbfgsConfig::default());
        assert!(!st.push_pair(vec![1.0, 0.0], vec![1e-11, 5.0]));
        assert!(!st.push_pair(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert_eq!(st.len(), 0);
        assert!(st.push_pair(vec![1.0, 0.0], vec![1.0, 0.0]));
        assert_eq!(st.len(), 1);
    }

    #[test]
    fn memory_is_bounded() {
        let mut st = LbfgsState::new(LbfgsConfig::default());
        for i in 0..10 {
            st.push_pair(vec![1.0 + i as f64], vec![1.0]);
        }
        assert_eq!(st.len(), 6);
        assert_eq!(st.pairs.front().unwrap().0[0], 5.0);
    }

    #[test]
    fn two_loop_matches_secant_on_one_pair() {
        // one pair in 1-D: H = s/y exactly
        let mut st = LbfgsState::new(LbfgsConfig::default());
        st.push_pair(vec![2.0], vec![8.0]);
        assert!((st.direction(&[3.0])[0] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn no_descent_signal() {
        // value always rises: Armijo never holds
        struct Up;
        impl Objective for Up {
            fn evaluate(&mut self, _t: &[f64]) -> Result<(f64, Vec<f64>)> {
                Ok((10.0, vec![1.0]))
            }
        }
        let mut st = LbfgsState::new(LbfgsConfig::default());
        assert_eq!(st.step(&[0.0], 1.0, &[1.0], &mut Up).unwrap(), StepResult::NoDescent);
        let out = lbfgs_run(&mut Up, &[0.0], 5, 1e-8, LbfgsConfig::default(), &mut |_| {}).unwrap();
        assert_eq!(out.theta, vec![0.0]);
        assert!(!out.converged);
    }

    #[test]
    fn already_optimal_returns_immediately() {
        let mut obj = half_sq;
        let out = lbfgs_run(&mut obj, &[0.0, 0.0], 10, 1e-8, LbfgsConfig::default(), &mut |_| {}).unwrap();
        assert_eq!(out.iters, 0);
        assert!(out.converged);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut obj = half_sq;
        assert!(lbfgs_run(&mut obj, &[1.0], 0, 1e-8, LbfgsConfig::default(), &mut |_| {}).is_err());
        assert!(lbfgs_run(&mut obj, &[1.0], 3, 0.0, LbfgsConfig::default(), &mut |_| {}).is_err());
    }
}
