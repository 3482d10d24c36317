use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use skrr_core::gpc::{project_quadrature, Provenance};
use skrr_core::polybasis::lobatto_nodes_for_degree;
use skrr_core::{Error, GpcSurrogate, QuadratureRule, TensorBasis, UnivariateFamily};

fn legendre(d: usize, p: usize) -> TensorBasis {
    TensorBasis::isotropic(UnivariateFamily::legendre(-1.0, 2.0).unwrap(), d, p).unwrap()
}

fn exact_rule(b: &TensorBasis) -> QuadratureRule {
    QuadratureRule::exact_for_degree(b, 2 * b.order()).unwrap()
}

fn unit(r: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; r];
    v[k] = 1.0;
    v
}

#[test]
fn projection_examples() {
    let b = legendre(2, 3);
    let rule = exact_rule(&b);
    for j in [0, 4, b.len() - 1] {
        let g = project_quadrature(&b, |x: &[f64]| b.eval(j, x).unwrap(), &rule).unwrap();
        for (k, c) in g.coeffs().iter().enumerate() {
            assert_abs_diff_eq!(*c, if k == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
        }
        assert_eq!(g.provenance(), Provenance::Quadrature);
    }
    let g = project_quadrature(&b, |_: &[f64]| 3.0, &rule).unwrap();
    assert_abs_diff_eq!(g.coeffs()[0], 3.0, epsilon = 1e-14);
    assert!(g.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
    assert_eq!(g.moments().1, g.coeffs()[1..].iter().map(|c| c * c).sum::<f64>());
}

#[test]
fn evaluation_examples() {
    let b = legendre(3, 2);
    let x = [0.3, -0.6, 1.7];
    let g = GpcSurrogate::new(b.clone(), unit(b.len(), 5), Provenance::Bpdn).unwrap();
    assert_eq!(g.eval(&x).unwrap(), b.eval(5, &x).unwrap());
    let z = GpcSurrogate::new(b.clone(), vec![0.0; b.len()], Provenance::Bpdn).unwrap();
    assert_eq!(z.eval(&x).unwrap(), 0.0);
    assert!(GpcSurrogate::new(b.clone(), vec![0.0; 3], Provenance::Bpdn).is_err());
    assert!(matches!(z.sobol_main(), Err(Error::ZeroVariance(_))));
    let c = GpcSurrogate::new(b.clone(), unit(b.len(), 0), Provenance::Bpdn).unwrap();
    assert_eq!(c.moments(), (1.0, 0.0));
}

#[test]
fn sobol_examples() {
    let b = legendre(3, 2);
    let k = b.multi_indices().position(&[2, 0, 0]).unwrap();
    let g = GpcSurrogate::new(b.clone(), unit(b.len(), k), Provenance::Bpdn).unwrap();
    assert_eq!(g.sobol_main().unwrap(), vec![1.0, 0.0, 0.0]);

    let b = legendre(2, 1);
    let mut c = vec![0.0; b.len()];
    c[b.multi_indices().position(&[1, 0]).unwrap()] = 0.8;
    c[b.multi_indices().position(&[0, 1]).unwrap()] = -0.8;
    let s = GpcSurrogate::new(b, c, Provenance::Bpdn).unwrap().sobol_main().unwrap();
    assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-15);
}

#[test]
fn json_and_csv_round_trip() {
    let b = legendre(2, 2);
    let c: Vec<f64> = (0..b.len()).map(|k| 1.0 / (k as f64 + 3.0)).collect();
    let g = GpcSurrogate::new(b, c, Provenance::Quadrature).unwrap();
    let back = GpcSurrogate::from_json(&g.to_json().unwrap()).unwrap();
    assert_eq!(back, g);
    let mut buf = Vec::new();
    g.write_csv_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("index,multi_index,value\n"));
    assert_eq!(text.lines().count(), 1 + g.coeffs().len());
}

fn surrogate() -> impl Strategy<Value = GpcSurrogate> {
    (1usize..4, 1usize..4).prop_flat_map(|(d, p)| {
        let b = legendre(d, p);
        let r = b.len();
        prop::collection::vec(-2.0f64..2.0, r)
            .prop_map(move |c| GpcSurrogate::new(b.clone(), c, Provenance::Bpdn).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(g in surrogate()) {
        let b = g.basis().clone();
        let rule = exact_rule(&b);
        let f = |x: &[f64]| g.eval(x).unwrap();
        let p = project_quadrature(&b, f, &rule).unwrap();
        let m2 = rule.integrate(|x| g.eval(x).unwrap().powi(2));
        let c = p.coeffs();
        let tail: f64 = c[1..].iter().map(|v| v * v).sum();
        prop_assert!((tail - (m2 - c[0] * c[0])).abs() <= 1e-8 * (1.0 + m2));
    }

    #[test]
    fn projection_is_idempotent(g in surrogate()) {
        let b = g.basis().clone();
        let q = lobatto_nodes_for_degree(2 * b.order());
        let rule = QuadratureRule::tensor(&b, &vec![q; b.dim()]).unwrap();
        let p = project_quadrature(&b, |x: &[f64]| g.eval(x).unwrap(), &rule).unwrap();
        for (a, c) in p.coeffs().iter().zip(g.coeffs()) {
            prop_assert!((a - c).abs() <= 1e-10);
        }
    }

    #[test]
    fn evaluation_is_linear(
        g in surrogate(),
        t in -3.0f64..3.0,
        x in prop::collection::vec(-1.0f64..2.0, 3),
    ) {
        let b = g.basis().clone();
        let x = &x[..b.dim()];
        let h: Vec<f64> = (0..b.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let sum: Vec<f64> = g.coeffs().iter().zip(&h).map(|(a, c)| a + t * c).collect();
        let gh = GpcSurrogate::new(b.clone(), h, Provenance::Bpdn).unwrap();
        let gs = GpcSurrogate::new(b, sum, Provenance::Bpdn).unwrap();
        let lhs = gs.eval(x).unwrap();
        let rhs = g.eval(x).unwrap() + t * gh.eval(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sobol_indices_partition_variance(g in surrogate()) {
        let s = g.sobol_main().unwrap();
        let total: f64 = s.iter().sum();
        prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(total <= 1.0 + 1e-12);
        // The remainder is exactly the interaction variance.
        let (_, var) = g.moments();
        let inter: f64 = g
            .basis()
            .multi_indices()
            .iter()
            .zip(g.coeffs())
            .filter(|(m, _)| m.iter().filter(|v| **v > 0).count() > 1)
            .map(|(_, c)| c * c)
            .sum();
        prop_assert!((total + inter / var - 1.0).abs() <= 1e-12);
    }
}
