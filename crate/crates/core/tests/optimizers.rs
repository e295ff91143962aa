mod common;

use common::random_vec;
use preig_core::optim::{lbfgs_run, nadam_run, LbfgsConfig, LbfgsState, NadamConfig, NadamState, Objective, StepResult};
use preig_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `0.5 (x - c)^T A (x - c)` with `A = M M^T + n I`.
struct Quadratic {
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl Quadratic {
    fn random_spd(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| m[i][k] * m[j][k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        Self { a, c: random_vec(n, 2.0, seed + 1) }
    }
}

impl Objective for Quadratic {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d: Vec<f64> = x.iter().zip(&self.c).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = self.a.iter().map(|row| row.iter().zip(&d).map(|(a, b)| a * b).sum()).collect();
        Ok((0.5 * d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>(), g))
    }
}

fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    Ok((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
}

fn normal_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn nadam_converges_on_quadratic() {
    let mut worst = (0.0f64, 0);
    for seed in 0..10 {
        let target = normal_vec(10, 2 * seed);
        let t2 = target.clone();
        let mut obj = move |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let g: Vec<f64> = x.iter().zip(&t2).map(|(a, b)| a - b).collect();
            Ok((0.5 * g.iter().map(|v| v * v).sum::<f64>(), g))
        };
        let theta0 = normal_vec(10, 2 * seed + 1);
        let cfg = NadamConfig { alpha: 0.05, ..Default::default() };
        let out = nadam_run(&mut obj, &theta0, 2000, cfg, &mut |_| {}).unwrap();
        let dist = out.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > worst.0 {
            worst = (dist, seed);
        }
    }
    assert!(worst.0 < 1e-3, "distance {} at seed {}", worst.0, worst.1);
}

#[test]
fn nadam_constant_gradient_limit() {
    // beta1 = 0: |update| approaches alpha |g| / (|g| + eps) monotonically
    let cfg = NadamConfig { beta1: 0.0, alpha: 0.01, ..Default::default() };
    let g = 0.37;
    let limit = cfg.alpha * g / (g + cfg.eps);
    let mut s = NadamState::new(1, cfg);
    let mut th = [0.0];
    let mut prev_gap = f64::INFINITY;
    for _ in 0..5000 {
        let before = th[0];
        s.step(&mut th, &[g]).unwrap();
        let gap = ((before - th[0]).abs() - limit).abs();
        assert!(gap <= prev_gap + 1e-15);
        prev_gap = gap;
    }
    assert!(prev_gap < 1e-6);
}

#[test]
fn nadam_permutation_invariant() {
    let theta = random_vec(6, 1.0, 3);
    let grads: Vec<Vec<f64>> = (0..5).map(|k| random_vec(6, 1.0, 10 + k)).collect();
    let perm = [3, 0, 5, 1, 4, 2];
    let cfg = NadamConfig { alpha: 0.02, ..Default::default() };
    let (mut a, mut b) = (theta.clone(), perm.iter().map(|&i| theta[i]).collect::<Vec<_>>());
    let (mut sa, mut sb) = (NadamState::new(6, cfg), NadamState::new(6, cfg));
    for g in &grads {
        sa.step(&mut a, g).unwrap();
        let gp: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
        sb.step(&mut b, &gp).unwrap();
    }
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b[k], a[i]);
    }
}

#[test]
fn lbfgs_spd_quadratic_10d() {
    for seed in 0..5 {
        let mut q = Quadratic::random_spd(10, seed);
        let out = lbfgs_run(&mut q, &vec![0.0; 10], 30, 1e-8, LbfgsConfig::default(), &mut |_| {}).unwrap();
        let (_, g) = q.evaluate(&out.theta).unwrap();
        let gi = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gi < 1e-8, "seed {seed}: |grad|_inf = {gi} after {} iterations", out.iters);
    }
}

#[test]
fn lbfgs_rosenbrock() {
    let mut obj = rosenbrock;
    let out = lbfgs_run(&mut obj, &[-1.2, 1.0], 200, 1e-10, LbfgsConfig::default(), &mut |_| {}).unwrap();
    assert!(out.f < 1e-6, "f = {} after {} iterations", out.f, out.iters);
}

#[test]
fn lbfgs_full_memory_quadratic_terminates_quickly() {
    for n in 2..=8 {
        for seed in 0..3 {
            let mut q = Quadratic::random_spd(n, 100 + seed);
            let cfg = LbfgsConfig { memory: n.max(6), ..Default::default() };
            let out = lbfgs_run(&mut q, &vec![0.0; n], n + 1, 1e-10, cfg, &mut |_| {}).unwrap();
            let (_, g) = q.evaluate(&out.theta).unwrap();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gn < 1e-10, "n = {n}, seed {seed}: |grad| = {gn}");
        }
    }
}

#[test]
fn armijo_holds_for_every_accepted_step() {
    let mut q = Quadratic::random_spd(6, 9);
    let mut st = LbfgsState::new(LbfgsConfig::default());
    let mut x = vec![1.0; 6];
    let (mut f, mut g) = q.evaluate(&x).unwrap();
    for _ in 0..15 {
        let d = st.direction(&g);
        match st.step(&x, f, &g, &mut q).unwrap() {
            StepResult::Moved { theta, f: fn_, grad, step_len } => {
                let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
                let expected: f64 = if slope < 0.0 { slope } else { -g.iter().map(|v| v * v).sum::<f64>() };
                assert!(fn_ <= f + 1e-4 * step_len * expected + 1e-15);
                x = theta;
                f = fn_;
                g = grad;
            }
            StepResult::Converged => break,
            StepResult::NoDescent => panic!("no descent on a convex quadratic"),
        }
    }
}

#[test]
fn optimizers_are_deterministic() {
    let run = || {
        let mut q = Quadratic::random_spd(4, 5);
        let a = nadam_run(&mut q, &[0.0; 4], 50, NadamConfig { alpha: 0.01, ..Default::default() }, &mut |_| {}).unwrap();
        let b = lbfgs_run(&mut q, &a, 10, 1e-12, LbfgsConfig::default(), &mut |_| {}).unwrap();
        (a, b)
    };
    assert_eq!(run(), run());
}
