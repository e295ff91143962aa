mod common;

use common::*;
use preig_core::gru::{backward, forward, init_params, jvp, mixed_grad, price_jacobian, GruParams, Triangular};

fn net(d: usize, h: usize, seed: u64) -> GruParams {
    // wider than the default init so gates are not all near 0.5
    let p = init_params(d, h, seed).unwrap();
    let theta: Vec<f64> = p.theta().iter().zip(random_vec(p.len(), 0.3, seed + 100)).map(|(a, b)| 2.0 * a + b).collect();
    p.with_theta(&theta).unwrap()
}

#[test]
fn library_forward_matches_reference() {
    let p = net(3, 4, 1);
    let x = random_vec(30, 1.0, 2);
    let f = forward(&p, &x).unwrap().f;
    let r = reference_forward(p.theta(), 3, 4, &x);
    assert!(max_rel_err(&f, &r, 1e-12) < 1e-12);
}

#[test]
fn backward_matches_finite_differences() {
    let (d, h, t) = (3, 4, 10);
    let p = net(d, h, 7);
    let x = random_vec(d * t, 1.0, 8);
    let g = random_vec(t, 1.0, 9);
    let tr = forward(&p, &x).unwrap();
    let grad = backward(&p, &tr, &g).unwrap();
    let fd = fd_gradient(p.theta(), 1e-5, |th| {
        reference_forward(th, d, h, &x).iter().zip(&g).map(|(f, w)| f * w).sum()
    });
    let err = max_rel_err(&grad, &fd, 1e-6);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn backward_zero_seed_is_zero() {
    let p = net(2, 3, 1);
    let x = random_vec(10, 1.0, 2);
    let tr = forward(&p, &x).unwrap();
    assert!(backward(&p, &tr, &[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn early_output_ignores_later_inputs_and_params() {
    // f_0 depends on x_0 and h_0 = 0 only, so U blocks receive no gradient
    let (d, h) = (2, 3);
    let p = net(d, h, 4);
    let x = random_vec(d * 6, 1.0, 5);
    let tr = forward(&p, &x).unwrap();
    let mut seed = vec![0.0; 6];
    seed[0] = 1.0;
    let grad = backward(&p, &tr, &seed).unwrap();
    let block = h * (d + h + 1);
    for g in 0..3 {
        let u = g * block + h * d;
        assert!(grad[u..u + h * h].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn price_jacobian_matches_finite_differences() {
    let (d, h, t, ch) = (3, 4, 12, 1);
    let p = net(d, h, 11);
    let x = random_vec(d * t, 1.0, 12);
    let tr = forward(&p, &x).unwrap();
    let jac = price_jacobian(&p, &tr, ch).unwrap();
    let fd = fd_price_jacobian(p.theta(), d, h, &x, ch, 1e-5);
    for tt in 0..t {
        for tau in 0..t {
            match jac.get(tt, tau) {
                Some(v) => {
                    let e = (v - fd[tt][tau]).abs() / v.abs().max(fd[tt][tau].abs()).max(1e-6);
                    assert!(e < 1e-5, "J[{tt}][{tau}] = {v}, fd {}", fd[tt][tau]);
                }
                None => {
                    assert!(tau > tt);
                    assert!(fd[tt][tau].abs() < 1e-12, "causality violated at ({tt}, {tau})");
                }
            }
        }
    }
}

#[test]
fn tangents_are_linear() {
    let (d, h, t) = (2, 3, 8);
    let p = net(d, h, 3);
    let x = random_vec(d * t, 1.0, 4);
    let tr = forward(&p, &x).unwrap();
    let a = random_vec(d * t, 1.0, 5);
    let b = random_vec(d * t, 1.0, 6);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let ja = jvp(&p, &tr, &a).unwrap();
    let jb = jvp(&p, &tr, &b).unwrap();
    let jab = jvp(&p, &tr, &ab).unwrap();
    for i in 0..t {
        assert!((jab[i] - ja[i] - jb[i]).abs() < 1e-12);
    }
    // a unit seed on the price coordinate reproduces a Jacobian column
    let jac = price_jacobian(&p, &tr, 1).unwrap();
    let mut e = vec![0.0; d * t];
    e[3 * d + 1] = 1.0;
    let col = jvp(&p, &tr, &e).unwrap();
    for tt in 3..t {
        assert!((col[tt] - jac.get(tt, 3).unwrap()).abs() < 1e-14);
    }
    assert!(col[..3].iter().all(|&v| v == 0.0));
}

fn fd_of_jacobian_entry(theta: &[f64], d: usize, h: usize, x: &[f64], ch: usize, t: usize, tau: usize) -> Vec<f64> {
    // outer FD in theta over an exact (tangent) inner Jacobian and an inner
    // FD Jacobian; both must agree with the analytic mixed gradient
    fd_gradient(theta, 1e-4, |th| {
        let p = GruParams::from_theta(d, h, th.to_vec()).unwrap();
        let tr = forward(&p, x).unwrap();
        price_jacobian(&p, &tr, ch).unwrap().get(t, tau).unwrap()
    })
}

#[test]
fn mixed_grad_single_entry_matches_fd_of_fd() {
    let (d, h, t, ch) = (1, 3, 6, 0);
    let p = net(d, h, 21);
    assert_eq!(p.len(), 49);
    let x = random_vec(d * t, 1.0, 22);
    let mut w = Triangular::zeros(t);
    w.set(3, 1, 1.0);
    let g = mixed_grad(&p, &x, ch, &w).unwrap();
    // pure FD-of-FD oracle on the reference forward
    let fdfd = fd_gradient(p.theta(), 1e-4, |th| {
        fd_price_jacobian(th, d, h, &x, ch, 1e-4)[3][1]
    });
    let err = max_rel_err(&g, &fdfd, 1e-4);
    assert!(err < 1e-3, "FD-of-FD relative error {err}");
    let fd_exact_inner = fd_of_jacobian_entry(p.theta(), d, h, &x, ch, 3, 1);
    let err = max_rel_err(&g, &fd_exact_inner, 1e-6);
    assert!(err < 1e-5, "FD-of-tangent relative error {err}");
}

#[test]
fn mixed_grad_dense_weights_match_fd() {
    let (d, h, t, ch) = (3, 4, 9, 2);
    let p = net(d, h, 31);
    let x = random_vec(d * t, 1.0, 32);
    let wv = random_vec(t * (t + 1) / 2, 1.0, 33);
    let mut w = Triangular::zeros(t);
    let mut k = 0;
    for tt in 0..t {
        for tau in 0..=tt {
            w.set(tt, tau, wv[k]);
            k += 1;
        }
    }
    let g = mixed_grad(&p, &x, ch, &w).unwrap();
    let fd = fd_gradient(p.theta(), 1e-5, |th| {
        let q = GruParams::from_theta(d, h, th.to_vec()).unwrap();
        let tr = forward(&q, &x).unwrap();
        let j = price_jacobian(&q, &tr, ch).unwrap();
        j.iter().map(|(a, b, v)| v * w.get(a, b).unwrap()).sum()
    });
    let err = max_rel_err(&g, &fd, 1e-6);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn mixed_grad_is_deterministic() {
    let p = net(2, 3, 5);
    let x = random_vec(16, 1.0, 6);
    let mut w = Triangular::zeros(8);
    w.set(7, 2, 0.5);
    w.set(4, 4, -1.0);
    assert_eq!(mixed_grad(&p, &x, 0, &w).unwrap(), mixed_grad(&p, &x, 0, &w).unwrap());
}
