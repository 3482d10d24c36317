use proptest::prelude::*;
use skrr_core::sampling::{
    beta_inverse_cdf, min_pairwise_distance, sample, sample_with_report, split, split_sizes, write_design_csv_to,
    DesignSpec, Law,
};
use skrr_core::Dataset;
use statrs::distribution::{Beta, ContinuousCDF};

fn strata_ok(pts: &[Vec<f64>], bounds: &[(f64, f64)]) -> bool {
    let n = pts.len();
    bounds.iter().enumerate().all(|(j, (lo, hi))| {
        let mut seen = vec![false; n];
        for p in pts {
            let u = (p[j] - lo) / (hi - lo);
            let k = ((u * n as f64).floor() as usize).min(n - 1);
            if seen[k] {
                return false;
            }
            seen[k] = true;
        }
        true
    })
}

#[test]
fn lhs_examples() {
    let one = sample(&DesignSpec::new(1, vec![(2.0, 3.0)], Law::LhsMaximin { candidates: 5 }, 0).unwrap()).unwrap();
    assert!(one.len() == 1 && (2.0..3.0).contains(&one[0][0]));

    let pi = std::f64::consts::PI;
    let bounds = vec![(-pi, pi); 3];
    let pts = sample(&DesignSpec::new(50, bounds.clone(), Law::LhsMaximin { candidates: 100 }, 1).unwrap()).unwrap();
    assert!(strata_ok(&pts, &bounds));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(DesignSpec::new(0, vec![(0.0, 1.0)], Law::Uniform, 0).is_err());
    assert!(DesignSpec::new(3, vec![(1.0, 1.0)], Law::Uniform, 0).is_err());
    assert!(DesignSpec::new(3, vec![], Law::Uniform, 0).is_err());
    assert!(DesignSpec::new(3, vec![(0.0, 1.0)], Law::Beta { shapes: vec![(0.0, 1.0)] }, 0).is_err());
    assert!(DesignSpec::new(3, vec![(0.0, 1.0)], Law::Beta { shapes: vec![(1.0, 1.0); 2] }, 0).is_err());
}

#[test]
fn beta_design_matches_moments() {
    let m = 2.0;
    let (lo, hi) = (0.95 * m, 1.05 * m);
    let n = 100_000;
    let spec = DesignSpec::new(n, vec![(lo, hi); 2], Law::Beta { shapes: vec![(4.0, 4.0), (2.0, 5.0)] }, 17).unwrap();
    let pts = sample(&spec).unwrap();
    for (j, (a, b)) in [(4.0f64, 4.0f64), (2.0, 5.0)].into_iter().enumerate() {
        let mean = lo + (hi - lo) * a / (a + b);
        let var = (hi - lo).powi(2) * a * b / ((a + b).powi(2) * (a + b + 1.0));
        let xs: Vec<f64> = pts.iter().map(|p| p[j]).collect();
        let m1 = xs.iter().sum::<f64>() / n as f64;
        let v1 = xs.iter().map(|x| (x - m1).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m1 - mean).abs() <= 3.0 * (var / n as f64).sqrt(), "dim {j}: mean {m1} vs {mean}");
        // The sample variance has relative standard error about sqrt(2 / n).
        assert!((v1 / var - 1.0).abs() <= 0.02, "dim {j}: var {v1} vs {var}");
        assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
    }
    // Symmetric shapes: centered at the interval midpoint.
    let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    let sd = ((hi - lo).powi(2) * 16.0 / (64.0 * 9.0) / n as f64).sqrt();
    assert!((xs.iter().sum::<f64>() / n as f64 - m).abs() <= 3.0 * sd);
}

#[test]
fn split_examples() {
    let x: Vec<Vec<f64>> = (0..120).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..120).map(|i| i as f64 * 2.0).collect();
    let d = Dataset::new(x, y).unwrap();
    assert_eq!(split_sizes(120, (0.67, 0.12, 0.21)), (80, 15, 25));
    let (t, v, s) = split(&d, (0.67, 0.12, 0.21), 4).unwrap();
    let (v, s) = (v.unwrap(), s.unwrap());
    assert_eq!((t.len(), v.len(), s.len()), (80, 15, 25));
    let mut all: Vec<f64> = t.x().iter().chain(v.x()).chain(s.x()).map(|p| p[0]).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(all, (0..120).map(|i| i as f64).collect::<Vec<_>>());
    for part in [&t, &v, &s] {
        assert!(part.x().iter().zip(part.y()).all(|(p, y)| *y == 2.0 * p[0]));
    }
    let (t2, v2, s2) = split(&d, (0.67, 0.12, 0.21), 4).unwrap();
    assert_eq!((t2.x(), v2.unwrap().x(), s2.unwrap().x()), (t.x(), v.x(), s.x()));

    let (t, v, s) = split(&d, (1.0, 0.0, 0.0), 0).unwrap();
    assert_eq!(t.len(), 120);
    assert!(v.is_none() && s.is_none());

    let tiny = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
    assert!(split(&tiny, (0.5, 0.1, 0.4), 0).is_err());
    assert!(split(&d, (0.5, 0.2, 0.2), 0).is_err());
}

#[test]
fn design_csv_has_inputs_only() {
    let mut buf = Vec::new();
    write_design_csv_to(&[vec![0.5, 1.0], vec![0.25, 2.0]], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x1,x2"));
    assert_eq!(text.lines().count(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lhs_is_stratified_in_every_dimension(
        n in 1usize..1000,
        d in 1usize..5,
        seed in 0u64..1000,
        lo in -5.0f64..5.0,
        w in 0.1f64..10.0,
    ) {
        let bounds = vec![(lo, lo + w); d];
        let spec = DesignSpec::new(n, bounds.clone(), Law::LhsMaximin { candidates: 3 }, seed).unwrap();
        let pts = sample(&spec).unwrap();
        prop_assert_eq!(pts.len(), n);
        prop_assert!(pts.iter().flatten().all(|v| (lo..=lo + w).contains(v)));
        prop_assert!(strata_ok(&pts, &bounds));
    }

    #[test]
    fn maximin_keeps_the_best_candidate(n in 2usize..60, d in 1usize..4, m in 1usize..30, seed in 0u64..1000) {
        let spec = DesignSpec::new(n, vec![(0.0, 1.0); d], Law::LhsMaximin { candidates: m }, seed).unwrap();
        let (pts, report) = sample_with_report(&spec).unwrap();
        let report = report.unwrap();
        prop_assert_eq!(report.min_distances.len(), m);
        let best = report.min_distances[report.chosen];
        prop_assert!(report.min_distances.iter().all(|v| *v <= best));
        prop_assert!((min_pairwise_distance(&pts) - best).abs() <= 1e-12);
    }

    #[test]
    fn sampling_is_deterministic(seed in 0u64..u64::MAX, law in prop_oneof![
        Just(Law::Uniform),
        Just(Law::LhsMaximin { candidates: 4 }),
        Just(Law::Beta { shapes: vec![(2.0, 3.0), (0.7, 0.7)] }),
    ]) {
        let spec = DesignSpec::new(25, vec![(-1.0, 1.0), (0.0, 5.0)], law, seed).unwrap();
        prop_assert_eq!(sample(&spec).unwrap(), sample(&spec).unwrap());
    }

    #[test]
    fn beta_quantile_inverts_the_cdf(u in 1e-9f64..1.0, a in 0.5f64..8.0, b in 0.5f64..8.0) {
        let x = beta_inverse_cdf(u, a, b);
        prop_assert!((0.0..=1.0).contains(&x));
        let back = Beta::new(a, b).unwrap().cdf(x);
        prop_assert!((back - u).abs() <= 1e-9, "{back} vs {u}");
    }

    #[test]
    fn beta_quantile_is_monotone(u in 0.0f64..1.0, v in 0.0f64..1.0, a in 0.5f64..8.0, b in 0.5f64..8.0) {
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(beta_inverse_cdf(lo, a, b) <= beta_inverse_cdf(hi, a, b));
    }
}
