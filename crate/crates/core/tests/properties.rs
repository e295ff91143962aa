use preig_core::dataset::{denormalize, normalize};
use preig_core::denoise::{denoise, denoise_fit, design_matrix, fit, nodes, Criterion};
use preig_core::metrics::rmse;
use preig_core::optim::{lbfgs_run, LbfgsConfig};
use proptest::prelude::*;

fn finite_vec(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, min_len..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_round_trip(col in finite_vec(2, 40)) {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assume!(hi - lo > 1e-6);
        let (norm, min, max) = normalize(&col).unwrap();
        for (&x, &z) in col.iter().zip(&norm) {
            prop_assert!((0.0..=1.0).contains(&z));
            let back = denormalize(z, min, max).unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(hi - lo));
        }
    }

    #[test]
    fn rmse_symmetric_and_shift_scale(y in finite_vec(1, 30), seed in 0u64..1000, c in -50.0f64..50.0, s in 0.01f64..100.0) {
        let p: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + ((i as u64 * 7919 + seed) % 13) as f64 - 6.0).collect();
        let base = rmse(&y, &p).unwrap();
        prop_assert_eq!(base, rmse(&p, &y).unwrap());
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        prop_assert!((rmse(&ys, &ps).unwrap() - base).abs() <= 1e-9 * base.max(1.0));
        let yk: Vec<f64> = y.iter().map(|v| v * s).collect();
        let pk: Vec<f64> = p.iter().map(|v| v * s).collect();
        prop_assert!((rmse(&yk, &pk).unwrap() - s * base).abs() <= 1e-9 * (s * base).max(1.0));
    }

    #[test]
    fn denoise_is_idempotent(u in finite_vec(8, 60)) {
        let once = denoise(&u, 6, Criterion::Aic).unwrap();
        let k = denoise_fit(&u, 6, Criterion::Aic).unwrap().order;
        let twice = fit(&once, k).unwrap().fitted;
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn residual_sse_non_increasing_in_order(u in finite_vec(12, 50)) {
        let mut prev = f64::INFINITY;
        let scale: f64 = u.iter().map(|v| v * v).sum::<f64>().max(1.0);
        for k in 0..=8 {
            let sse = fit(&u, k).unwrap().residual_sse;
            prop_assert!(sse <= prev + 1e-9 * scale);
            prev = sse;
        }
    }

    #[test]
    fn polynomial_signals_recovered(coef in prop::collection::vec(-5.0f64..5.0, 1..6), n in 12usize..80) {
        let k = coef.len() - 1;
        let phi = design_matrix(n, k).unwrap();
        let u = phi.mul_vec(&coef);
        let got = fit(&u, k).unwrap();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let err = u.iter().zip(&got.fitted).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm);
        prop_assert_eq!(nodes(n).len(), got.fitted.len());
    }

    #[test]
    fn lbfgs_minimizes_separable_quadratics(diag in prop::collection::vec(0.5f64..20.0, 2..7), c in prop::collection::vec(-3.0f64..3.0, 7)) {
        let n = diag.len();
        let c = c[..n].to_vec();
        let mut obj = |x: &[f64]| -> preig_core::Result<(f64, Vec<f64>)> {
            let g: Vec<f64> = (0..n).map(|i| diag[i] * (x[i] - c[i])).collect();
            Ok(((0..n).map(|i| 0.5 * diag[i] * (x[i] - c[i]).powi(2)).sum(), g))
        };
        let out = lbfgs_run(&mut obj, &vec![0.0; n], n + 1, 1e-10, LbfgsConfig::default(), &mut |_| {}).unwrap();
        prop_assert!(out.converged, "not converged after {} iterations, f = {}", out.iters, out.f);
    }
}
