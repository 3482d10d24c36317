use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use skrr_core::kernels::{gram, kernel_eval, spectral_kernel};
use skrr_core::regression::{fit, rkhs_norm_sq, FitOptions};
use skrr_core::{Dataset, Error, KernelSpec, TensorBasis, TrainedRegressor, UnivariateFamily};

fn toy(d: usize, n: usize, seed: u64) -> Dataset {
    // A cheap deterministic scatter; enough for examples.
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| next()).collect()).collect();
    let y = x.iter().map(|p| p.iter().map(|v| v.sin()).sum::<f64>() + 0.3).collect();
    Dataset::new(x, y).unwrap()
}

#[test]
fn fit_examples() {
    let d = toy(2, 12, 3);
    let k = KernelSpec::gaussian(0.7).unwrap();
    let r = fit(&k, 0.0, &d, FitOptions::default()).unwrap();
    for (x, y) in d.x().iter().zip(d.y()) {
        assert_abs_diff_eq!(r.predict_mean(x).unwrap(), *y, epsilon = 1e-6);
        assert!(r.predict_variance(x).unwrap() <= 1e-8);
    }

    let zero = Dataset::new(d.x().to_vec(), vec![0.0; 12]).unwrap();
    let r = fit(&k, 0.1, &zero, FitOptions::default()).unwrap();
    assert!(r.alpha().iter().all(|a| *a == 0.0));
    assert_eq!(r.predict_mean(&[0.3, 0.3]).unwrap(), 0.0);

    let dup = Dataset::new(vec![vec![0.5], vec![0.5]], vec![1.0, 1.0]).unwrap();
    let err = fit(&KernelSpec::gaussian(1.0).unwrap(), 0.0, &dup, FitOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Singular { .. }), "{err}");
    let opts = FitOptions {
        allow_pseudo_inverse: true,
    };
    let r = fit(&KernelSpec::gaussian(1.0).unwrap(), 0.0, &dup, opts).unwrap();
    assert!(r.used_pseudo_inverse());
    assert_abs_diff_eq!(r.predict_mean(&[0.5]).unwrap(), 1.0, epsilon = 1e-8);

    assert!(fit(&k, -1.0, &d, FitOptions::default()).is_err());
}

#[test]
fn far_field_examples() {
    let one = Dataset::new(vec![vec![0.0, 0.0]], vec![3.0]).unwrap();
    let r = fit(&KernelSpec::gaussian(0.5).unwrap(), 0.0, &one, FitOptions::default()).unwrap();
    assert!(r.predict_mean(&[40.0, 40.0]).unwrap().abs() < 1e-300);
    assert_abs_diff_eq!(r.predict_variance(&[40.0, 40.0]).unwrap(), 1.0, epsilon = 1e-15);
    assert!(r.predict_mean(&[0.0]).is_err());
}

#[test]
fn constant_spectral_kernel_predicts_a_constant() {
    let b = TensorBasis::isotropic(UnivariateFamily::legendre(-1.0, 1.0).unwrap(), 2, 2).unwrap();
    let k = spectral_kernel(&b, &[0], &[1.0]).unwrap();
    let d = toy(2, 6, 9);
    let r = fit(&k, 1e-3, &d, FitOptions::default()).unwrap();
    let a = r.predict_mean(&[0.1, 0.2]).unwrap();
    for x in [[0.9, -0.9], [-0.3, 0.0], [0.0, 1.0]] {
        assert_abs_diff_eq!(r.predict_mean(&x).unwrap(), a, epsilon = 1e-12);
    }
}

#[test]
fn rkhs_norm_examples() {
    let g = KernelSpec::gaussian(1.0).unwrap();
    let zero = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
    assert_eq!(rkhs_norm_sq(&g, &zero).unwrap(), 0.0);
    let one = Dataset::new(vec![vec![0.3]], vec![2.0]).unwrap();
    assert_abs_diff_eq!(rkhs_norm_sq(&g, &one).unwrap(), 4.0, epsilon = 1e-14);
    let d = toy(1, 5, 1);
    let scaled = Dataset::new(d.x().to_vec(), d.y().iter().map(|v| 3.0 * v).collect()).unwrap();
    let (a, b) = (rkhs_norm_sq(&g, &d).unwrap(), rkhs_norm_sq(&g, &scaled).unwrap());
    assert_abs_diff_eq!(b, 9.0 * a, epsilon = 1e-9 * b);
}

#[test]
fn model_and_dataset_round_trip() {
    let d = toy(3, 10, 5);
    let k = KernelSpec::matern(0.8, 2.5).unwrap();
    let r = fit(&k, 1e-4, &d, FitOptions::default()).unwrap();
    let back = TrainedRegressor::from_json(&r.to_json().unwrap()).unwrap();
    let q = vec![0.1, -0.2, 0.3];
    assert_eq!(back.predict_mean(&q).unwrap(), r.predict_mean(&q).unwrap());
    assert_eq!(back.alpha(), r.alpha());

    let mut buf = Vec::new();
    d.write_csv_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x1,x2,x3,y\n"));
    let again = Dataset::read_csv_from(text.as_bytes()).unwrap();
    assert_eq!(again.x(), d.x());
    assert_eq!(again.y(), d.y());
}

fn data(d: usize) -> impl Strategy<Value = Dataset> {
    (2usize..25).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
            .prop_map(|(x, y)| Dataset::new(x, y).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn error_bound_holds_for_rkhs_targets(
        z in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 12),
        a in prop::collection::vec(-2.0f64..2.0, 12),
        used in 3usize..12,
        queries in prop::collection::vec(prop::collection::vec(-1.5f64..1.5, 2), 50),
    ) {
        let k = KernelSpec::gaussian(0.6).unwrap();
        let g = gram(&k, &z).unwrap();
        let av = nalgebra::DVector::from_column_slice(&a);
        let norm_sq = (av.transpose() * &g * &av)[(0, 0)];
        let f = |x: &[f64]| z.iter().zip(&a).map(|(zi, ai)| ai * kernel_eval(&k, zi, x).unwrap()).sum::<f64>();
        let xs = z[..used].to_vec();
        let ys = xs.iter().map(|x| f(x)).collect();
        let r = fit(&k, 0.0, &Dataset::new(xs, ys).unwrap(), FitOptions::default());
        prop_assume!(r.is_ok());
        let r = r.unwrap();
        for x in &queries {
            let err = (f(x) - r.predict_mean(x).unwrap()).abs();
            let sd = r.predict_variance(x).unwrap().sqrt();
            prop_assert!(err <= sd * norm_sq.sqrt() + 1e-9, "err {err}, bound {}", sd * norm_sq.sqrt());
        }
    }

    #[test]
    fn residual_grows_with_nugget(d in data(2), g in 0.1f64..2.0) {
        let k = KernelSpec::gaussian(g).unwrap();
        let mut last = 0.0;
        for e in -8..=2 {
            let lam = 10f64.powi(e);
            let r = fit(&k, lam, &d, FitOptions::default()).unwrap();
            let res = r.training_residual(d.y()).unwrap();
            prop_assert!(res >= last - 1e-9 * (1.0 + last), "lambda {lam}: {res} < {last}");
            last = res;
        }
    }

    #[test]
    fn variance_is_bounded(
        d in data(3),
        g in 0.1f64..2.0,
        lam in 1e-8f64..1.0,
        queries in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 20),
    ) {
        let k = KernelSpec::gaussian(g).unwrap();
        let r = fit(&k, lam, &d, FitOptions::default()).unwrap();
        for (x, v) in queries.iter().zip(r.predict_variance_batch(&queries).unwrap()) {
            prop_assert!(v >= 0.0);
            prop_assert!(v <= kernel_eval(&k, x, x).unwrap() + 1e-10);
        }
    }

    #[test]
    fn dual_system_is_solved(d in data(2), g in 0.1f64..1.0, lam in 1e-6f64..1.0) {
        let k = KernelSpec::gaussian(g).unwrap();
        let r = fit(&k, lam, &d, FitOptions::default()).unwrap();
        let mut m = gram(&k, d.x()).unwrap();
        for i in 0..m.nrows() {
            m[(i, i)] += lam;
        }
        let res = &m * nalgebra::DVector::from_column_slice(r.alpha())
            - nalgebra::DVector::from_column_slice(d.y());
        let ynorm = d.y().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res.norm() <= 1e-8 * ynorm.max(1e-300));
        // Batched and pointwise predictions agree.
        let batch = r.predict_mean_batch(d.x()).unwrap();
        for (x, b) in d.x().iter().zip(batch) {
            prop_assert!((r.predict_mean(x).unwrap() - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
