//! Test-only reference implementations, written independently of the
//! library's vectorized code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive scalar-loop GRU forward pass over the documented flat layout
/// `W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h, w_out, b_out`.
pub fn reference_forward(theta: &[f64], d: usize, h: usize, x: &[f64]) -> Vec<f64> {
    let block = h * (d + h + 1);
    let w = |g: usize, i: usize, j: usize| theta[g * block + i * d + j];
    let u = |g: usize, i: usize, j: usize| theta[g * block + h * d + i * h + j];
    let b = |g: usize, i: usize| theta[g * block + h * d + h * h + i];
    let wo = |i: usize| theta[3 * block + i];
    let bo = theta[3 * block + h];
    let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
    let steps = x.len() / d;
    let mut hs = vec![0.0; h];
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        let mut z = vec![0.0; h];
        let mut r = vec![0.0; h];
        for i in 0..h {
            let mut az = b(0, i);
            let mut ar = b(1, i);
            for j in 0..d {
                az += w(0, i, j) * xt[j];
                ar += w(1, i, j) * xt[j];
            }
            for j in 0..h {
                az += u(0, i, j) * hs[j];
                ar += u(1, i, j) * hs[j];
            }
            z[i] = sig(az);
            r[i] = sig(ar);
        }
        let mut next = vec![0.0; h];
        for i in 0..h {
            let mut ah = b(2, i);
            for j in 0..d {
                ah += w(2, i, j) * xt[j];
            }
            for j in 0..h {
                ah += u(2, i, j) * r[j] * hs[j];
            }
            next[i] = (1.0 - z[i]) * hs[i] + z[i] * ah.tanh();
        }
        hs = next;
        out.push(bo + (0..h).map(|i| wo(i) * hs[i]).sum::<f64>());
    }
    out
}

/// `J[t][tau]` by central differences of the reference forward in the price input.
pub fn fd_price_jacobian(theta: &[f64], d: usize, h: usize, x: &[f64], ch: usize, step: f64) -> Vec<Vec<f64>> {
    let steps = x.len() / d;
    let mut jac = vec![vec![0.0; steps]; steps];
    for tau in 0..steps {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[tau * d + ch] += step;
        xm[tau * d + ch] -= step;
        let fp = reference_forward(theta, d, h, &xp);
        let fm = reference_forward(theta, d, h, &xm);
        for t in 0..steps {
            jac[t][tau] = (fp[t] - fm[t]) / (2.0 * step);
        }
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(theta: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut th = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = th[i];
            th[i] = orig + step;
            let fp = f(&th);
            th[i] = orig - step;
            let fm = f(&th);
            th[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Largest coordinate error relative to `max(|a_i|, |b_i|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn random_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}
