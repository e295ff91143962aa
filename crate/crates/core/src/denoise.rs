//! Chebyshev least-squares smoothing.
//!
//! A series `u` of length `N` is placed on uniformly spaced nodes
//! `v_1 = -1, ..., v_N = 1` and projected onto `T_0..T_K` (first kind). The
//! coefficients minimize `|u - Phi c|^2` and are found with a Householder QR
//! factorization of the design matrix `Phi`. The order `K` is chosen by AIC,
//! BIC, or a hold-out-the-tail prediction error.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, ln, sqrt};
use crate::{Error, Result};

/// Largest order tried when no explicit bound is given.
pub const DEFAULT_MAX_ORDER: usize = 10;

/// Relative residual below which a fit counts as exact, so `ln(SSE)` is never
/// driven by round-off.
const EXACT_SSE_REL: f64 = 1e-24;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * x[r];
            }
        }
        out
    }
}

/// `T_k(v)` by the three-term recurrence `T_{n+1} = 2 v T_n - T_{n-1}`.
pub fn cheb_eval(k: usize, v: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::OutOfDomain(v));
    }
    Ok(cheb_unchecked(k, v))
}

fn cheb_unchecked(k: usize, v: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, v);
    if k == 0 {
        return prev;
    }
    for _ in 1..k {
        let next = 2.0 * v * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `n` uniformly spaced nodes from -1 to 1 inclusive.
pub fn nodes(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| if i + 1 == n { 1.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// `Phi[t][i] = T_i(v_t)` for `t < n`, `i <= k`.
pub fn design_matrix(n: usize, k: usize) -> Result<Matrix> {
    if n <= k {
        return Err(Error::Underdetermined { rows: n, cols: k + 1 });
    }
    Ok(design_on(&nodes(n), k))
}

fn design_on(v: &[f64], k: usize) -> Matrix {
    let mut m = Matrix::zeros(v.len(), k + 1);
    for (t, &x) in v.iter().enumerate() {
        let (mut prev, mut cur) = (1.0, x);
        m.set(t, 0, 1.0);
        if k >= 1 {
            m.set(t, 1, x);
        }
        for i in 2..=k {
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
            m.set(t, i, cur);
        }
    }
    m
}

/// Least-squares solution of `a x ~ b` via Householder QR (`a.rows >= a.cols`).
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: b.len() });
    }
    if m < n {
        return Err(Error::Underdetermined { rows: m, cols: n });
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let scale = r.data.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for j in 0..n {
        let mut norm = 0.0;
        for i in j..m {
            norm += r.get(i, j) * r.get(i, j);
        }
        let norm = sqrt(norm);
        if norm == 0.0 {
            continue;
        }
        let alpha = if r.get(j, j) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| r.get(i, j)).collect();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv == 0.0 {
            continue;
        }
        for c in j..n {
            let s: f64 = (j..m).map(|i| v[i - j] * r.get(i, c)).sum::<f64>() * 2.0 / vv;
            for i in j..m {
                let x = r.get(i, c) - s * v[i - j];
                r.set(i, c, x);
            }
        }
        let s: f64 = (j..m).map(|i| v[i - j] * qtb[i]).sum::<f64>() * 2.0 / vv;
        for i in j..m {
            qtb[i] -= s * v[i - j];
        }
    }
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let d = r.get(j, j);
        if d.abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput("rank-deficient design matrix".into()));
        }
        let s: f64 = ((j + 1)..n).map(|c| r.get(j, c) * x[c]).sum();
        x[j] = (qtb[j] - s) / d;
    }
    Ok(x)
}

/// A least-squares Chebyshev projection of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub nodes: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual_sse: f64,
}

impl ChebyshevFit {
    /// Evaluate the fitted expansion at `v` in `[-1, 1]`.
    pub fn eval(&self, v: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::OutOfDomain(v));
        }
        Ok(self.coefficients.iter().enumerate().map(|(i, c)| c * cheb_unchecked(i, v)).sum())
    }
}

pub fn fit(u: &[f64], k: usize) -> Result<ChebyshevFit> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let phi = design_matrix(u.len(), k)?;
    // a constant series is reproduced exactly by T_0 alone
    let coefficients = if u.iter().all(|&x| x == u[0]) {
        let mut c = vec![0.0; k + 1];
        c[0] = u[0];
        c
    } else {
        lstsq(&phi, u)?
    };
    let fitted = phi.mul_vec(&coefficients);
    let residual_sse = u.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ChebyshevFit { order: k, coefficients, nodes: nodes(u.len()), fitted, residual_sse })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
    /// Fit on the first 80% of samples, score on the last 20%.
    Cv,
}

fn is_exact(sse: f64, energy: f64) -> bool {
    sse <= EXACT_SSE_REL * energy
}

fn holdout_error(u: &[f64], k: usize) -> Result<f64> {
    let n = u.len();
    let hold = ((n as f64 * 0.2 + 0.5) as usize).max(1);
    let keep = n - hold;
    if keep < k + 1 {
        return Ok(f64::INFINITY);
    }
    let v = nodes(n);
    let train = design_on(&v[..keep], k);
    let c = lstsq(&train, &u[..keep])?;
    let test = design_on(&v[keep..], k);
    let pred = test.mul_vec(&c);
    Ok(pred.iter().zip(&u[keep..]).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / hold as f64)
}

/// Order in `0..=k_max` minimizing `criterion`; ties go to the smaller order.
pub fn select_order(u: &[f64], k_max: usize, criterion: Criterion) -> Result<usize> {
    let n = u.len();
    if n < 2 || k_max + 2 > n {
        return Err(Error::InvalidInput(alloc::format!("k_max {k_max} must be at most N - 2 (N = {n})")));
    }
    let energy = dot(u, u);
    let nf = n as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=k_max {
        let f = fit(u, k)?;
        if is_exact(f.residual_sse, energy) {
            return Ok(k);
        }
        let params = (k + 1) as f64;
        let score = match criterion {
            Criterion::Aic => nf * ln(f.residual_sse / nf) + 2.0 * params,
            Criterion::Bic => nf * ln(f.residual_sse / nf) + params * ln(nf),
            Criterion::Cv => holdout_error(u, k)?,
        };
        if score < best.1 {
            best = (k, score);
        }
    }
    Ok(best.0)
}

/// `min(k_max, N - 2)`; callers may warn when this differs from the request.
pub fn effective_max_order(n: usize, k_max: usize) -> usize {
    k_max.min(n.saturating_sub(2))
}

/// Select an order (after clamping `k_max`) and return the fit at that order.
pub fn denoise_fit(u: &[f64], k_max: usize, criterion: Criterion) -> Result<ChebyshevFit> {
    if u.len() < 2 {
        return Err(Error::InvalidInput("denoising needs at least 2 samples".into()));
    }
    let k = select_order(u, effective_max_order(u.len(), k_max), criterion)?;
    fit(u, k)
}

/// The reconstructed signal `Phi c`.
pub fn denoise(u: &[f64], k_max: usize, criterion: Criterion) -> Result<Vec<f64>> {
    denoise_fit(u, k_max, criterion).map(|f| f.fitted)
}
