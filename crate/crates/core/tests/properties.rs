use proptest::prelude::*;

use sketchreg::embed::{f1, f2, measure_embed_errors};
use sketchreg::estimators::{fit_ols, fit_tsls, CovKind, DataBundle};
use sketchreg::inference::{m2_rule, s_factor};
use sketchreg::linalg::{dot, fwht_normalized, spectral_norm, thin_svd, Matrix, Qr, RngStream};
use sketchreg::moments::{diagonal_form, direct_form};
use sketchreg::sketch::{plan_sketch, stream_countsketch, SketchKind, SketchScheme};

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed, 17);
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn gaussian_vec(n: usize, seed: u64, id: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, id);
    (0..n).map(|_| rng.normal()).collect()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fwht_is_an_isometric_involution(log_n in 0u32..10, seed in any::<u64>()) {
        let v = gaussian_vec(1 << log_n, seed, 1);
        let once = fwht_normalized(&v).unwrap();
        let norm_v = dot(&v, &v).sqrt();
        prop_assert!((dot(&once, &once).sqrt() - norm_v).abs() <= 1e-12 * norm_v.max(1.0));
        let twice = fwht_normalized(&once).unwrap();
        for (a, b) in v.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * norm_v.max(1.0));
        }
    }

    #[test]
    fn qr_factor_is_orthonormal_and_reconstructs(rows in 3usize..40, cols in 1usize..6, seed in any::<u64>()) {
        prop_assume!(rows >= cols);
        let a = gaussian_matrix(rows, cols, seed);
        let qr = Qr::new(&a).unwrap();
        let q = qr.q_thin();
        prop_assert!(max_abs_diff(&q.gram(), &Matrix::identity(cols)) < 1e-12);
        prop_assert!(max_abs_diff(&q.matmul(qr.r()), &a) < 1e-12 * a.max_abs().max(1.0));
    }

    #[test]
    fn svd_top_value_matches_power_iteration(rows in 2usize..25, cols in 1usize..8, seed in any::<u64>()) {
        let a = gaussian_matrix(rows, cols, seed);
        let s = thin_svd(&a).unwrap().sigma_max();
        let p = spectral_norm(&a).unwrap();
        prop_assert!((s - p).abs() <= 1e-8 * s.max(1.0), "svd {s} power {p}");
    }

    #[test]
    fn ols_is_scale_equivariant(seed in any::<u64>(), k in prop::sample::select(vec![-3.0, 0.5, 2.0, 1024.0])) {
        let x = gaussian_matrix(30, 3, seed);
        let y = gaussian_vec(30, seed, 2);
        let base = fit_ols(&DataBundle::new(y.clone(), x.clone(), None).unwrap()).unwrap();
        let scaled = fit_ols(&DataBundle::new(y.iter().map(|v| k * v).collect(), x, None).unwrap()).unwrap();
        for (a, b) in base.beta.iter().zip(&scaled.beta) {
            prop_assert!((k * a - b).abs() <= 1e-12 * (k * a).abs().max(1.0));
        }
        for cov in CovKind::BOTH {
            let expect = base.cov(cov).scale(k * k);
            prop_assert!(max_abs_diff(&expect, scaled.cov(cov)) <= 1e-12 * expect.max_abs().max(1.0));
        }
    }

    #[test]
    fn covariances_are_positive_semidefinite(seed in any::<u64>(), tsls in any::<bool>()) {
        let n = 40;
        let z = gaussian_matrix(n, 4, seed);
        let x = Matrix::from_fn(n, 2, |i, j| z.row(i)[j] + 0.5 * z.row(i)[j + 2]);
        let y = gaussian_vec(n, seed, 3);
        let data = DataBundle::new(y, x, Some(z)).unwrap();
        let fit = if tsls { fit_tsls(&data).unwrap() } else { fit_ols(&data).unwrap() };
        let mut rng = RngStream::new(seed, 5);
        for cov in CovKind::BOTH {
            let c = fit.cov(cov);
            let trace: f64 = c.diagonal().iter().sum();
            for _ in 0..8 {
                let v: Vec<f64> = (0..c.ncols()).map(|_| rng.normal()).collect();
                prop_assert!(dot(&v, &c.matvec(&v)) >= -1e-10 * trace * dot(&v, &v));
            }
        }
    }

    #[test]
    fn m2_is_invariant_to_common_scaling(m1 in 1usize..5000, se in 1e-3f64..10.0, effect in 1e-2f64..5.0, j in -8i32..8) {
        let k = 2f64.powi(j);
        prop_assert_eq!(m2_rule(m1, se, effect, 0.05, 0.8).unwrap(), m2_rule(m1, k * se, k * effect, 0.05, 0.8).unwrap());
    }

    #[test]
    fn s_factor_symmetry(alpha in 0.001f64..0.999, gamma in 0.001f64..0.999) {
        let a = s_factor(alpha, gamma).unwrap();
        let b = s_factor(1.0 - gamma, 1.0 - alpha).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(s_factor(alpha, alpha).unwrap().abs() < 1e-9);
    }

    #[test]
    fn bound_factors_are_monotone(e1 in 0.0f64..0.9, e2 in 0.0f64..2.0, d in 0.0f64..0.05) {
        prop_assert!(f1(e1 + d, e2).unwrap() >= f1(e1, e2).unwrap());
        prop_assert!(f1(e1, e2 + d).unwrap() >= f1(e1, e2).unwrap());
        prop_assert!(f2(e1 + d, e2).unwrap() >= f2(e1, e2).unwrap());
        prop_assert!(f2(e1, e2 + d).unwrap() >= f2(e1, e2).unwrap());
    }

    #[test]
    fn embed_errors_depend_only_on_column_spaces(seed in any::<u64>(), scheme in prop::sample::select(vec![SketchKind::CountSketch, SketchKind::Srht, SketchKind::Gaussian])) {
        let n = 128;
        let z = gaussian_matrix(n, 3, seed);
        let x = Matrix::from_fn(n, 2, |i, j| z.row(i)[j] - 0.3 * z.row(i)[2]);
        let e = gaussian_vec(n, seed, 4);
        let plan = plan_sketch(SketchScheme::new(scheme, 64), n, &RngStream::new(seed, 6), None).unwrap();
        let base = measure_embed_errors(&x, &z, &e, &plan).unwrap();
        let rx = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        let rz = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.5, 2.0, 0.0], vec![0.0, -1.0, 1.5]]).unwrap();
        let moved = measure_embed_errors(&x.matmul(&rx), &z.matmul(&rz), &e, &plan).unwrap();
        for (a, b) in [(base.eps1, moved.eps1), (base.eps2, moved.eps2), (base.eps3, moved.eps3)] {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn streaming_countsketch_matches_plan_in_any_order(n in 1usize..60, m in 1usize..12, seed in any::<u64>(), shift in 0usize..60) {
        let a = gaussian_matrix(n, 3, seed);
        let stream = RngStream::new(seed, 9);
        let plan = plan_sketch(SketchScheme::new(SketchKind::CountSketch, m), n, &stream, None).unwrap();
        let dense = plan.apply(&a).unwrap();
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).rev().collect();
        let streamed = stream_countsketch(order.iter().map(|&i| (i, a.row(i).to_vec())), m, &stream).unwrap();
        prop_assert_eq!(dense.as_slice(), streamed.as_slice());
    }

    #[test]
    fn row_sampling_has_no_cross_terms(n in 2usize..50, m in 1usize..30, seed in any::<u64>(), uniform in any::<bool>()) {
        let kind = if uniform { SketchKind::UniformWithReplacement } else { SketchKind::Bernoulli };
        prop_assume!(m <= n);
        let plan = plan_sketch(SketchScheme::new(kind, m), n, &RngStream::new(seed, 10), None).unwrap();
        let u = gaussian_vec(n, seed, 11);
        let v = gaussian_vec(n, seed, 12);
        prop_assert_eq!(direct_form(&plan, &u, &v).unwrap().to_bits(), diagonal_form(&plan, &u, &v).unwrap().to_bits());
    }
}
