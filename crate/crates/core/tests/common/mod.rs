//! Reference computations shared by the integration tests. Each is written
//! independently of the library code it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Smallest `|c|_1` over `a c = y` by enumerating every support of size at
/// most `rows`. With `rows < cols` an l1 minimizer exists at a basic
/// solution, so the enumeration is exhaustive.
pub fn bpdn_oracle(a: &DMatrix<f64>, y: &[f64]) -> f64 {
    let (m, n) = a.shape();
    let yv = DVector::from_column_slice(y);
    let tol = 1e-9 * (1.0 + yv.norm());
    let mut best = f64::INFINITY;
    if yv.norm() <= tol {
        return 0.0;
    }
    for mask in 1u32..(1u32 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if cols.len() > m {
            continue;
        }
        let sub = DMatrix::from_fn(m, cols.len(), |i, j| a[(i, cols[j])]);
        let svd = sub.clone().svd(true, true);
        let Ok(c) = svd.solve(&yv, 1e-12) else {
            continue;
        };
        if (&sub * &c - &yv).norm() <= tol {
            best = best.min(c.iter().map(|v| v.abs()).sum());
        }
    }
    best
}

pub type Poly = BTreeMap<Vec<usize>, f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<usize> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

fn poly_add(a: &mut Poly, b: &Poly, s: f64) {
    for (e, c) in b {
        *a.entry(e.clone()).or_insert(0.0) += s * c;
    }
    a.retain(|_, c| *c != 0.0);
}

fn mono(d: usize, var: Option<usize>, pow: usize, c: f64) -> Poly {
    let mut e = vec![0; d];
    if let Some(v) = var {
        e[v] = pow;
    }
    Poly::from([(e, c)])
}

/// Monomial expansion of the Rosenbrock function in `dim` variables.
pub fn rosenbrock_monomials(dim: usize) -> Poly {
    let mut total = Poly::new();
    for i in 0..dim - 1 {
        // x_{i+1} - x_i^2
        let mut t = mono(dim, Some(i + 1), 1, 1.0);
        poly_add(&mut t, &mono(dim, Some(i), 2, 1.0), -1.0);
        poly_add(&mut total, &poly_mul(&t, &t), 100.0);
        // 1 - x_i
        let mut u = mono(dim, None, 0, 1.0);
        poly_add(&mut u, &mono(dim, Some(i), 1, 1.0), -1.0);
        poly_add(&mut total, &poly_mul(&u, &u), 1.0);
    }
    total
}

/// Coefficients of `t^k` on orthonormal Legendre functions, `k <= kmax`.
fn power_to_legendre(kmax: usize) -> Vec<Vec<f64>> {
    // Classical P_j first: t P_j = ((j + 1) P_{j+1} + j P_{j-1}) / (2j + 1).
    let mut rows = vec![vec![0.0; kmax + 1]; kmax + 1];
    rows[0][0] = 1.0;
    for k in 1..=kmax {
        let prev = rows[k - 1].clone();
        for (j, c) in prev.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let jf = j as f64;
            if j < kmax {
                rows[k][j + 1] += c * (jf + 1.0) / (2.0 * jf + 1.0);
            }
            if j > 0 {
                rows[k][j - 1] += c * jf / (2.0 * jf + 1.0);
            }
        }
    }
    // P_j = sqrt(2j+1)^-1 times the orthonormal function.
    for row in &mut rows {
        for (j, c) in row.iter_mut().enumerate() {
            *c /= (2.0 * j as f64 + 1.0).sqrt();
        }
    }
    rows
}

/// Re-expresses a polynomial in `x` on orthonormal Legendre products for
/// the uniform law on `[lo, hi]^d`.
pub fn monomials_to_legendre(p: &Poly, lo: f64, hi: f64) -> Poly {
    let kmax = p.keys().flatten().copied().max().unwrap_or(0);
    let table = power_to_legendre(kmax);
    let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    let mut out = Poly::new();
    for (e, c) in p {
        // x = mid + half t, expanded binomially per variable.
        let mut term: Poly = Poly::from([(vec![0; e.len()], *c)]);
        for (v, &k) in e.iter().enumerate() {
            let mut factor = Poly::new();
            for i in 0..=k {
                let binom = (0..i).fold(1.0, |acc, m| acc * (k - m) as f64 / (m + 1) as f64);
                let w = binom * half.powi(i as i32) * mid.powi((k - i) as i32);
                for (j, lj) in table[i].iter().enumerate() {
                    if *lj != 0.0 && w != 0.0 {
                        let mut idx = vec![0; e.len()];
                        idx[v] = j;
                        *factor.entry(idx).or_insert(0.0) += w * lj;
                    }
                }
            }
            term = poly_mul(&term, &factor);
        }
        poly_add(&mut out, &term, 1.0);
    }
    let scale = out.values().fold(0.0f64, |m, c| m.max(c.abs()));
    out.retain(|_, c| c.abs() > 1e-12 * scale);
    out
}

/// Quartile-free median.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
