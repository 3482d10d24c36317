mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use skrr_core::benchfn::Benchmark;
use skrr_core::metrics::score;
use skrr_core::polybasis::lobatto_nodes_for_degree;
use skrr_core::sampling::{sample, DesignSpec, Law};
use skrr_core::skrr::{nskrr_fit, norm_objective, optimal_sigmas, sskrr_fit, NskrrOptions, SskrrOptions};
use skrr_core::{Dataset, Error, QuadratureRule, TensorBasis, UnivariateFamily};

fn legendre(d: usize, p: usize, lo: f64, hi: f64) -> TensorBasis {
    TensorBasis::isotropic(UnivariateFamily::legendre(lo, hi).unwrap(), d, p).unwrap()
}

fn design(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let spec = DesignSpec::new(n, vec![(lo, hi); d], Law::LhsMaximin { candidates: 20 }, seed).unwrap();
    sample(&spec).unwrap()
}

#[test]
fn sigma_examples() {
    let s = optimal_sigmas(&[1.0, 1.0], 2.0, None).unwrap();
    assert_eq!(s.sigmas, vec![1.0, 1.0]);
    let s = optimal_sigmas(&[3.0, -1.0], 1.0, None).unwrap();
    assert_abs_diff_eq!(s.sigmas[0], 0.75, epsilon = 1e-15);
    assert_abs_diff_eq!(s.sigmas[1], 0.25, epsilon = 1e-15);
    let s = optimal_sigmas(&[5.0], 7.0, None).unwrap();
    assert_eq!(s.sigmas, vec![7.0]);

    let s = optimal_sigmas(&[0.0, 2.0, 1e-20, -1.0], 3.0, None).unwrap();
    assert_eq!(s.retained, vec![1, 3]);
    assert_eq!(s.dense_sigmas(4), vec![0.0, 2.0, 0.0, 1.0]);

    assert!(matches!(optimal_sigmas(&[1e-5, 0.0], 1.0, Some(1e-3)), Err(Error::Degenerate(_))));
    assert!(optimal_sigmas(&[1.0], 0.0, None).is_err());
}

#[test]
fn objective_examples() {
    assert_eq!(norm_objective(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
    assert_abs_diff_eq!(norm_objective(&[3.0, 1.0], &[0.75, 0.25]).unwrap(), 16.0, epsilon = 1e-12);
    assert_abs_diff_eq!(norm_objective(&[3.0, 1.0], &[0.5, 0.5]).unwrap(), 20.0, epsilon = 1e-12);
    assert_eq!(norm_objective(&[0.0, 0.0], &[0.3, 2.0]).unwrap(), 0.0);
    assert!(norm_objective(&[1.0, 1.0], &[1.0, 0.0]).is_err());
}

#[test]
fn single_basis_function_is_reproduced() {
    let b = legendre(2, 4, -1.0, 1.0);
    let k = b.multi_indices().position(&[2, 1]).unwrap();
    let x = design(30, 2, -1.0, 1.0, 3);
    let y = x.iter().map(|p| b.eval(k, p).unwrap()).collect();
    let fit = sskrr_fit(&b, &Dataset::new(x, y).unwrap(), 1e-10, 1e-12, &SskrrOptions::default()).unwrap();
    assert_eq!(fit.spectral.retained, vec![k]);
    for q in design(50, 2, -1.0, 1.0, 4) {
        assert_abs_diff_eq!(fit.regressor.predict_mean(&q).unwrap(), b.eval(k, &q).unwrap(), epsilon = 1e-8);
    }
}

#[test]
fn mean_depends_on_nugget_over_trace() {
    let f = Benchmark::ishigami_default();
    let (lo, hi) = f.bounds()[0];
    let b = legendre(3, 8, lo, hi);
    let x = design(100, 3, lo, hi, 8);
    let y = x.iter().map(|p| f.eval(p)).collect();
    let data = Dataset::new(x, y).unwrap();
    let one = SskrrOptions {
        kappa: Some(2.0),
        ..Default::default()
    };
    let two = SskrrOptions {
        kappa: Some(4.0),
        ..Default::default()
    };
    let a = sskrr_fit(&b, &data, 1e-6, 1e-3, &one).unwrap();
    let c = sskrr_fit(&b, &data, 1e-6, 2e-3, &two).unwrap();
    let q = design(40, 3, lo, hi, 9);
    let (ma, mc) = (a.regressor.predict_mean_batch(&q).unwrap(), c.regressor.predict_mean_batch(&q).unwrap());
    let (va, vc) = (
        a.regressor.predict_variance_batch(&q).unwrap(),
        c.regressor.predict_variance_batch(&q).unwrap(),
    );
    for i in 0..q.len() {
        assert!((ma[i] - mc[i]).abs() <= 1e-10 * (1.0 + ma[i].abs()));
        assert!((2.0 * va[i] - vc[i]).abs() <= 1e-10 * (1.0 + vc[i]));
    }
}

#[test]
fn nskrr_examples() {
    let b = legendre(2, 4, -1.0, 1.0);
    let rule = QuadratureRule::tensor(&b, &[lobatto_nodes_for_degree(8); 2]).unwrap();
    let k = b.multi_indices().position(&[1, 2]).unwrap();
    let x = design(40, 2, -1.0, 1.0, 1);
    let y = x.iter().map(|p| b.eval(k, p).unwrap()).collect();
    let data = Dataset::new(x, y).unwrap();
    let opts = NskrrOptions::default();

    let zero = nskrr_fit(&b, &data, 1e-8, 0, &rule, &opts).unwrap();
    assert_eq!(zero.trace.len(), 1);
    let uniform = b.len() as f64;
    assert!(zero.solution.sigmas.iter().all(|s| (s * uniform - zero.solution.kappa).abs() <= 1e-12));

    let one = nskrr_fit(&b, &data, 1e-8, 1, &rule, &opts).unwrap();
    let dense = one.solution.dense_sigmas(b.len());
    assert!(dense[k] / one.solution.kappa > 0.9, "share {}", dense[k] / one.solution.kappa);
    for rec in &one.trace {
        assert_abs_diff_eq!(rec.sigmas_summary.sum, one.solution.kappa, epsilon = 1e-12 * one.solution.kappa);
    }
    assert!(one.trace_json().unwrap().contains("\"objective\""));

    let coarse = QuadratureRule::tensor(&b, &[4, 4]).unwrap();
    assert!(nskrr_fit(&b, &data, 1e-8, 1, &coarse, &opts).is_err());
}

#[test]
fn nskrr_iterations_improve_ishigami() {
    let f = Benchmark::ishigami_default();
    let (lo, hi) = f.bounds()[0];
    let b = legendre(3, 10, lo, hi);
    let rule = QuadratureRule::tensor(&b, &[12; 3]).unwrap();
    let mut wins = 0;
    for seed in 0..10 {
        let x = design(100, 3, lo, hi, seed);
        let y = x.iter().map(|p| f.eval(p)).collect();
        let data = Dataset::new(x, y).unwrap();
        let test = design(1000, 3, lo, hi, 1000 + seed);
        let truth: Vec<f64> = test.iter().map(|p| f.eval(p)).collect();
        let q2 = |n| {
            let fit = nskrr_fit(&b, &data, 1e-6, n, &rule, &NskrrOptions::default()).unwrap();
            let pred = fit.regressor.predict_mean_batch(&test).unwrap();
            score(&pred, &truth).unwrap().q2.unwrap()
        };
        let (base, iterated) = (q2(0), q2(3));
        wins += usize::from(iterated >= base);
    }
    assert!(wins > 5, "iterating helped in {wins} of 10 seeds");
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -10.0f64..10.0], 1..30)
        .prop_filter("needs a nonzero entry", |c| c.iter().any(|v| v.abs() > 1e-6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sigma_star_minimizes_the_norm(
        c in coeffs(),
        kappa in 1e-3f64..1e3,
        raw in prop::collection::vec(prop::collection::vec(1e-6f64..1.0, 30), 20),
    ) {
        let s = optimal_sigmas(&c, kappa, None).unwrap();
        let star = s.dense_sigmas(c.len());
        let best = norm_objective(&c, &star).unwrap();
        for w in raw {
            let w = &w[..c.len()];
            let total: f64 = w.iter().sum();
            let sigma: Vec<f64> = w.iter().map(|v| kappa * v / total).collect();
            let val = norm_objective(&c, &sigma).unwrap();
            prop_assert!(best <= val * (1.0 + 1e-12));
        }
    }

    #[test]
    fn trace_is_conserved_and_scale_free(c in coeffs(), kappa in 1e-3f64..1e3, t in 1e-3f64..1e3) {
        let s = optimal_sigmas(&c, kappa, None).unwrap();
        let total: f64 = s.sigmas.iter().sum();
        prop_assert!((total - kappa).abs() <= 1e-12 * kappa);
        let scaled: Vec<f64> = c.iter().map(|v| t * v).collect();
        let u = optimal_sigmas(&scaled, kappa, None).unwrap();
        prop_assert_eq!(&u.retained, &s.retained);
        for (a, b) in u.sigmas.iter().zip(&s.sigmas) {
            prop_assert!((a - b).abs() <= 1e-12 * kappa);
        }
        // Proportional to |c| on the retained set.
        for (k, sig) in s.retained.iter().zip(&s.sigmas) {
            let total_c: f64 = s.retained.iter().map(|&j| c[j].abs()).sum();
            prop_assert!((sig - kappa * c[*k].abs() / total_c).abs() <= 1e-12 * kappa);
        }
    }
}
