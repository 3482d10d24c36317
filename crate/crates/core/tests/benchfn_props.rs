mod common;

use approx::assert_abs_diff_eq;
use rand::Rng;
use skrr_core::benchfn::{ishigami, moment_oracle, rosenbrock, Benchmark};
use skrr_core::gpc::{project_quadrature, Provenance};
use skrr_core::{GpcSurrogate, QuadratureRule, TensorBasis, UnivariateFamily};

#[test]
fn point_values() {
    use std::f64::consts::PI;
    assert_eq!(ishigami(&[0.0; 3], 7.0, 0.1), 0.0);
    assert_abs_diff_eq!(ishigami(&[PI / 2.0, PI / 2.0, 0.0], 7.0, 0.1), 8.0, epsilon = 1e-14);
    assert_eq!(rosenbrock(&[1.0; 10]), 0.0);
    assert_eq!(rosenbrock(&[0.0; 10]), 9.0);
    assert_eq!(Benchmark::from_name("rosenbrock").unwrap().dim(), 10);
    assert!(Benchmark::from_name("branin").is_err());
}

#[test]
fn ishigami_moments_match_tables() {
    let f = Benchmark::ishigami_default();
    let (mean, var) = moment_oracle(&f, 30).unwrap();
    assert_abs_diff_eq!(mean, 3.5, epsilon = 1e-3);
    assert_abs_diff_eq!(var, 13.845, epsilon = 1e-3);
    let r = f.references();
    assert_abs_diff_eq!(var, r.variance.unwrap(), epsilon = 1e-8);
    assert_abs_diff_eq!(mean, r.mean.unwrap(), epsilon = 1e-8);
}

#[test]
fn rosenbrock_has_38_monomials() {
    assert_eq!(common::rosenbrock_monomials(10).len(), 38);
}

#[test]
fn rosenbrock_moments() {
    let f = Benchmark::rosenbrock_default();
    let (mean, var) = moment_oracle(&f, 6).unwrap();
    assert_abs_diff_eq!(mean, 4101.0, epsilon = 1e-8);
    assert_abs_diff_eq!(mean, 9.0 * (100.0 * (4.0 / 3.0 + 16.0 / 5.0) + 7.0 / 3.0), epsilon = 1e-9);
    // Parseval on the Legendre expansion of the symbolic polynomial.
    let leg = common::monomials_to_legendre(&common::rosenbrock_monomials(10), -2.0, 2.0);
    let c0 = leg[&vec![0; 10]];
    let tail: f64 = leg.iter().filter(|(e, _)| e.iter().any(|v| *v > 0)).map(|(_, c)| c * c).sum();
    assert_abs_diff_eq!(c0, mean, epsilon = 1e-8 * mean);
    assert_abs_diff_eq!(tail, var, epsilon = 1e-8 * var);
    assert_eq!(moment_oracle(&Benchmark::Constant { value: -2.0, dim: 3 }, 2).unwrap(), (-2.0, 0.0));
}

#[test]
fn rosenbrock_is_reproduced_by_degree_four_expansion() {
    let leg = UnivariateFamily::legendre(-2.0, 2.0).unwrap();
    let mut r = common::rng(4);

    // Quadrature projection where the tensor rule is affordable.
    let f = Benchmark::Rosenbrock { dim: 4 };
    let b = TensorBasis::isotropic(leg.clone(), 4, 4).unwrap();
    let rule = QuadratureRule::tensor(&b, &[6; 4]).unwrap();
    let g = project_quadrature(&b, |x: &[f64]| f.eval(x), &rule).unwrap();
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let v = f.eval(&x);
        assert!((g.eval(&x).unwrap() - v).abs() <= 1e-8 * v.abs().max(1.0));
    }

    // Ten variables through the symbolic expansion.
    let b = TensorBasis::isotropic(leg, 10, 4).unwrap();
    let leg10 = common::monomials_to_legendre(&common::rosenbrock_monomials(10), -2.0, 2.0);
    let mut c = vec![0.0; b.len()];
    for (e, v) in &leg10 {
        c[b.multi_indices().position(e).unwrap()] = *v;
    }
    let g = GpcSurrogate::new(b, c, Provenance::Quadrature).unwrap();
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..10).map(|_| r.random_range(-2.0..2.0)).collect();
        let v = rosenbrock(&x);
        assert!((g.eval(&x).unwrap() - v).abs() <= 1e-8 * v.abs().max(1.0));
    }
}

#[test]
fn ishigami_sobol_from_full_projection() {
    let f = Benchmark::ishigami_default();
    let (lo, hi) = f.bounds()[0];
    let b = TensorBasis::isotropic(UnivariateFamily::legendre(lo, hi).unwrap(), 3, 10).unwrap();
    let rule = QuadratureRule::tensor(&b, &[12; 3]).unwrap();
    let g = project_quadrature(&b, |x: &[f64]| f.eval(x), &rule).unwrap();
    let s = g.sobol_main().unwrap();
    assert_abs_diff_eq!(s[0], 0.3139, epsilon = 1e-3);
    assert_abs_diff_eq!(s[1], 0.4424, epsilon = 1e-3);
    assert!(s[2] <= 1e-6);
    let r = f.references().sobol.unwrap();
    assert_abs_diff_eq!(s[0], r[0], epsilon = 2e-3);
    assert_abs_diff_eq!(s[1], r[1], epsilon = 2e-3);
}
