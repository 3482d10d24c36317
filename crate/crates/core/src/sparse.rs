//! Measurement matrices and basis pursuit denoising,
//! `min |c|_1  s.t.  |Theta c - Y|_2 <= eta`.
//!
//! The solver follows the Pareto-curve root finding of SPGL1: each outer step
//! solves the LASSO problem `min |Theta c - Y|_2 s.t. |c|_1 <= tau` by spectral
//! projected gradient and then updates `tau` by a Newton step on
//! `phi(tau) = eta`. A final polish on the detected support restores exact
//! feasibility and removes the residual bias of the iterative solution.
//! Data are scaled to unit norm first so the result is scale covariant; with
//! `eta = 0` a short simplex run from the polished vertex makes it exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2};
use crate::polybasis::TensorBasis;

/// `Theta[i][k] = phi_k(X_i)`.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    theta: DMatrix<f64>,
    basis: TensorBasis,
}

pub fn build_theta(basis: &TensorBasis, pts: &[Vec<f64>]) -> Result<MeasurementMatrix> {
    let r = basis.len();
    let mut theta = DMatrix::zeros(pts.len(), r);
    let mut row = vec![0.0; r];
    for (i, x) in pts.iter().enumerate() {
        if x.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: x.len(),
            });
        }
        basis.eval_all_into(x, &mut row);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite basis value at row {i}")));
        }
        for (k, v) in row.iter().enumerate() {
            theta[(i, k)] = *v;
        }
    }
    Ok(MeasurementMatrix {
        theta,
        basis: basis.clone(),
    })
}

impl MeasurementMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn cols(&self) -> usize {
        self.theta.ncols()
    }

    pub fn solve(&self, y: &[f64], eta: f64, opts: &BpdnOptions) -> Result<SparseCoefficients> {
        bpdn_solve(&self.theta, y, eta, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpdnOptions {
    pub max_outer: usize,
    /// Cap on projected-gradient iterations per LASSO subproblem.
    pub max_inner: usize,
    /// Relative duality gap at which a subproblem is considered solved.
    pub inner_tol: f64,
    /// Tolerance on `|phi(tau) - eta|`; `None` means `max(1e-10, 1e-6 |Y|)`.
    pub outer_tol: Option<f64>,
    pub normalize_columns: bool,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        Self {
            max_outer: 100,
            max_inner: 10_000,
            inner_tol: 1e-9,
            outer_tol: None,
            normalize_columns: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    pub c: Vec<f64>,
    pub residual_l2: f64,
    pub l1: f64,
    pub iterations: usize,
    pub eta: f64,
}

impl SparseCoefficients {
    pub fn sparsity(&self, delta: f64) -> usize {
        sparsity(&self.c, delta)
    }

    /// Writes `index,multi_index,value`; the multi-index is space separated.
    pub fn write_csv(&self, basis: &TensorBasis, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        write_coefficients_csv(basis, &self.c, file)
    }
}

pub(crate) fn write_coefficients_csv<W: std::io::Write>(
    basis: &TensorBasis,
    c: &[f64],
    writer: W,
) -> Result<()> {
    if c.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            found: c.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "multi_index", "value"])?;
    for (k, (mi, v)) in basis.multi_indices().iter().zip(c).enumerate() {
        let mi: Vec<String> = mi.iter().map(|i| i.to_string()).collect();
        w.write_record([k.to_string(), mi.join(" "), format!("{v:e}")])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// `#{k : |c_k| > delta}`.
pub fn sparsity(c: &[f64], delta: f64) -> usize {
    c.iter().filter(|v| v.abs() > delta).count()
}

fn feasible(res: f64, eta: f64) -> bool {
    res <= eta * (1.0 + 1e-6) + 1e-12
}

fn residual(a: &DMatrix<f64>, c: &[f64], y: &[f64]) -> Vec<f64> {
    let ac = a * DVector::from_column_slice(c);
    ac.iter().zip(y).map(|(p, t)| p - t).collect()
}

fn at_mul(a: &DMatrix<f64>, r: &[f64]) -> Vec<f64> {
    a.tr_mul(&DVector::from_column_slice(r)).as_slice().to_vec()
}

fn l1(c: &[f64]) -> f64 {
    c.iter().map(|v| v.abs()).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Euclidean projection onto `{c : |c|_1 <= tau}`.
pub fn project_l1_ball(v: &[f64], tau: f64) -> Vec<f64> {
    if tau <= 0.0 {
        return vec![0.0; v.len()];
    }
    if l1(v) <= tau {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - tau) / (j as f64 + 1.0);
        if uj > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

struct Lasso<'a> {
    a: &'a DMatrix<f64>,
    y: &'a [f64],
}

struct LassoState {
    x: Vec<f64>,
    r: Vec<f64>,
    g: Vec<f64>,
    f: f64,
}

impl<'a> Lasso<'a> {
    fn state(&self, x: Vec<f64>) -> LassoState {
        let r = residual(self.a, &x, self.y);
        let g = at_mul(self.a, &r);
        let f = 0.5 * dot(&r, &r);
        LassoState { x, r, g, f }
    }

    // Duality gap of `min 1/2 |r|^2 s.t. |x|_1 <= tau` with `r = A x - y`.
    fn gap(&self, s: &LassoState, tau: f64) -> f64 {
        dot(&s.r, &s.r) + dot(self.y, &s.r) + tau * inf_norm(&s.g)
    }

    /// Spectral projected gradient with a non-monotone Armijo search.
    fn solve(
        &self,
        x0: Vec<f64>,
        tau: f64,
        tol: f64,
        max_iter: usize,
        iters: &mut usize,
    ) -> LassoState {
        const MEMORY: usize = 10;
        let mut s = self.state(project_l1_ball(&x0, tau));
        let mut history = vec![s.f; 1];
        let ag = residual(self.a, &s.g, &vec![0.0; self.y.len()]);
        let agn = dot(&ag, &ag);
        let mut step = if agn > 0.0 { dot(&s.g, &s.g) / agn } else { 1.0 };
        for _ in 0..max_iter {
            let gap = self.gap(&s, tau);
            if gap <= tol * s.f.max(1.0) || s.f == 0.0 {
                break;
            }
            *iters += 1;
            let fmax = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let trial: Vec<f64> = s.x.iter().zip(&s.g).map(|(x, g)| x - step * g).collect();
            let p = project_l1_ball(&trial, tau);
            let d: Vec<f64> = p.iter().zip(&s.x).map(|(a, b)| a - b).collect();
            let gtd = dot(&s.g, &d);
            if gtd >= 0.0 {
                break;
            }
            let mut lambda = 1.0;
            let mut next = None;
            for _ in 0..30 {
                let xn: Vec<f64> = s.x.iter().zip(&d).map(|(x, d)| x + lambda * d).collect();
                let sn = self.state(xn);
                if sn.f <= fmax + 1e-4 * lambda * gtd {
                    next = Some(sn);
                    break;
                }
                lambda *= 0.5;
            }
            let Some(sn) = next else { break };
            let sx: Vec<f64> = sn.x.iter().zip(&s.x).map(|(a, b)| a - b).collect();
            let sg: Vec<f64> = sn.g.iter().zip(&s.g).map(|(a, b)| a - b).collect();
            let sts = dot(&sx, &sx);
            let sty = dot(&sx, &sg);
            step = if sty > 0.0 {
                (sts / sty).clamp(1e-16, 1e16)
            } else {
                step * 2.0
            };
            s = sn;
            history.push(s.f);
            if history.len() > MEMORY {
                history.remove(0);
            }
            if sts == 0.0 {
                break;
            }
        }
        s
    }
}

/// Least-squares fit on `support` and its sign-constrained shift toward a
/// smaller l1 norm with residual exactly `eta`.
fn polish_on_support(
    a: &DMatrix<f64>,
    y: &[f64],
    eta: f64,
    support: &[usize],
    signs: &[f64],
) -> Option<Vec<f64>> {
    let m = a.nrows();
    let k = support.len();
    if k == 0 {
        return None;
    }
    let mut sub = DMatrix::zeros(m, k);
    for (j, &col) in support.iter().enumerate() {
        sub.set_column(j, &a.column(col));
    }
    let mut full = vec![0.0; a.ncols()];
    if k > m {
        // Min-norm correction toward residual eta.
        return None;
    }
    let qr = sub.clone().qr();
    let rmat = qr.r();
    let diag_max = (0..k).map(|i| rmat[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| rmat[(i, i)].abs() <= 1e-12 * diag_max) {
        return None;
    }
    let qty = qr.q().tr_mul(&DVector::from_column_slice(y));
    let c_ls = rmat.solve_upper_triangular(&qty)?;
    let r_ls = norm2(&residual(&sub, c_ls.as_slice(), y));
    let mut c = c_ls.clone();
    if eta > r_ls {
        // G^-1 s with G = R^T R.
        let s = DVector::from_column_slice(signs);
        let z = rmat.tr_solve_upper_triangular(&s)?;
        let w = rmat.solve_upper_triangular(&z)?;
        let q = s.dot(&w);
        if q > 0.0 {
            let mut t = ((eta * eta - r_ls * r_ls) / q).sqrt() * (1.0 - 1e-12);
            for j in 0..k {
                if w[j] != 0.0 {
                    let tz = c_ls[j] / w[j];
                    if tz > 0.0 && c_ls[j] * signs[j] > 0.0 {
                        t = t.min(tz);
                    }
                }
            }
            c = &c_ls - w * t;
        }
    }
    for (j, &col) in support.iter().enumerate() {
        full[col] = c[j];
    }
    Some(full)
}

fn min_norm_correction(a: &DMatrix<f64>, y: &[f64], eta: f64, c: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let r = residual(a, c, y);
    let rn = norm2(&r);
    if rn <= eta {
        return Some(c.to_vec());
    }
    let mut sub = DMatrix::zeros(a.nrows(), support.len());
    for (j, &col) in support.iter().enumerate() {
        sub.set_column(j, &a.column(col));
    }
    let (delta, _) = linalg::least_squares(&sub, &r);
    let theta = 1.0 - eta * (1.0 - 1e-9) / rn;
    let mut out = c.to_vec();
    for (j, &col) in support.iter().enumerate() {
        out[col] -= theta * delta[j];
    }
    Some(out)
}

fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Moves `c` along null directions of its active columns, never increasing
/// `|c|_1` and keeping `A c` fixed, until those columns are independent.
fn purify(a: &DMatrix<f64>, c: &[f64], support: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut x = vec![0.0; c.len()];
    for &k in support {
        x[k] = c[k];
    }
    let support: Vec<usize> = support.iter().copied().filter(|&k| x[k] != 0.0).collect();
    if support.is_empty() {
        return (x, support);
    }
    let sub = columns(a, &support);
    let eig = (sub.transpose() * &sub).symmetric_eigen();
    let lmax = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let nullity = order
        .iter()
        .enumerate()
        .take_while(|&(r, &i)| support.len() - r > a.nrows() || eig.eigenvalues[i] <= 1e-14 * lmax)
        .count();
    let mut null: Vec<Vec<f64>> = order[..nullity]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let mut alive = vec![true; support.len()];

    while let Some(mut z) = null.pop() {
        let slope: f64 = (0..support.len()).map(|j| x[support[j]].signum() * z[j]).sum();
        if slope > 0.0 {
            z.iter_mut().for_each(|v| *v = -*v);
        }
        let hit = |z: &[f64]| {
            (0..support.len())
                .filter(|&j| alive[j] && x[support[j]] * z[j] < 0.0)
                .map(|j| (j, -x[support[j]] / z[j]))
                .min_by(|p, q| p.1.total_cmp(&q.1))
        };
        let (j, t) = match hit(&z) {
            Some(s) => s,
            None => {
                z.iter_mut().for_each(|v| *v = -*v);
                match hit(&z) {
                    Some(s) => s,
                    None => continue,
                }
            }
        };
        for (i, zi) in z.iter().enumerate() {
            if alive[i] {
                x[support[i]] += t * zi;
            }
        }
        x[support[j]] = 0.0;
        alive[j] = false;
        // Keep only null directions that leave the dropped coordinate at zero.
        for v in null.iter_mut() {
            let f = v[j] / z[j];
            v.iter_mut().zip(&z).for_each(|(a, b)| *a -= f * b);
            v[j] = 0.0;
        }
    }
    let kept = support.iter().zip(&alive).filter(|(_, &a)| a).map(|(&k, _)| k).collect();
    (x, kept)
}

/// Exact finish for `eta = 0`: revised simplex on `min |c|_1 s.t. A c = y`,
/// warm-started from a vertex near `start`. Bland's rule prevents cycling.
fn simplex_refine(a: &DMatrix<f64>, y: &[f64], start: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = a.shape();
    let nz: Vec<usize> = (0..n).filter(|&k| start[k] != 0.0).collect();
    let (x, support) = purify(a, start, &nz);
    let col = |v: usize| -> DVector<f64> {
        if v < n {
            a.column(v).into_owned()
        } else {
            -a.column(v - n)
        }
    };

    // Complete the support to a basis with Gram-Schmidt.
    let mut basis: Vec<usize> = support.iter().map(|&k| if x[k] > 0.0 { k } else { n + k }).collect();
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(m);
    let extend = |v: DVector<f64>, q: &mut Vec<DVector<f64>>| {
        let nrm = v.norm();
        let mut r = v;
        for b in q.iter() {
            r -= b * b.dot(&r);
        }
        let rn = r.norm();
        if rn > 1e-9 * nrm {
            q.push(r / rn);
            true
        } else {
            false
        }
    };
    for &v in &basis {
        if !extend(col(v), &mut q) {
            return None;
        }
    }
    for k in 0..n {
        if q.len() == m {
            break;
        }
        if !support.contains(&k) && extend(col(k), &mut q) {
            basis.push(k);
        }
    }
    if basis.len() < m {
        return None;
    }

    let yv = DVector::from_column_slice(y);
    let ones = DVector::from_element(m, 1.0);
    for _ in 0..20 * (m + n) {
        let bmat = DMatrix::from_columns(&basis.iter().map(|&v| col(v)).collect::<Vec<_>>());
        let lu = bmat.clone().lu();
        let xb = lu.solve(&yv)?;
        let xmax = xb.amax();
        if xb.iter().any(|v| *v < -1e-9 * xmax.max(1.0)) {
            // An infeasible warm start, or drift after many pivots.
            return None;
        }
        let w = bmat.transpose().lu().solve(&ones)?;
        let aw = a.tr_mul(&w);
        let entering = (0..2 * n).find(|&v| {
            let rc = if v < n { 1.0 - aw[v] } else { 1.0 + aw[v - n] };
            rc < -1e-10 && !basis.contains(&v)
        });
        let Some(e) = entering else {
            let mut c = vec![0.0; n];
            for (&v, xv) in basis.iter().zip(xb.iter()) {
                let xv = xv.max(0.0);
                if v < n {
                    c[v] += xv;
                } else {
                    c[v - n] -= xv;
                }
            }
            return Some(c);
        };
        let d = lu.solve(&col(e))?;
        let leave = (0..m)
            .filter(|&i| d[i] > 1e-12)
            .map(|i| (i, xb[i].max(0.0) / d[i]))
            .min_by(|p, q| p.1.total_cmp(&q.1).then(basis[p.0].cmp(&basis[q.0])))?;
        basis[leave.0] = e;
    }
    None
}

/// Basis pursuit denoising on a dense matrix.
pub fn bpdn_solve(a: &DMatrix<f64>, y: &[f64], eta: f64, opts: &BpdnOptions) -> Result<SparseCoefficients> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
    }
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite observation"));
    }
    let n = a.ncols();
    let ynorm = norm2(y);
    if ynorm <= eta {
        return Ok(SparseCoefficients {
            c: vec![0.0; n],
            residual_l2: ynorm,
            l1: 0.0,
            iterations: 0,
            eta,
        });
    }
    // Work on unit-norm data so every tolerance below is relative.
    let yn: Vec<f64> = y.iter().map(|v| v / ynorm).collect();
    let mut inner = *opts;
    inner.outer_tol = opts.outer_tol.map(|t| t / ynorm);
    match solve_unit(a, &yn, eta / ynorm, &inner) {
        Ok(mut sol) => {
            sol.c.iter_mut().for_each(|v| *v *= ynorm);
            sol.l1 = l1(&sol.c);
            sol.residual_l2 = norm2(&residual(a, &sol.c, y));
            sol.eta = eta;
            Ok(sol)
        }
        Err(Error::Infeasible { floor, .. }) => Err(Error::Infeasible {
            floor: floor * ynorm,
            eta,
        }),
        Err(Error::NonConvergence { iterations, best, .. }) => {
            let best: Vec<f64> = best.iter().map(|v| v * ynorm).collect();
            Err(Error::NonConvergence {
                iterations,
                residual: norm2(&residual(a, &best, y)),
                eta,
                best,
            })
        }
        Err(e) => Err(e),
    }
}

fn solve_unit(a: &DMatrix<f64>, y: &[f64], eta: f64, opts: &BpdnOptions) -> Result<SparseCoefficients> {
    let n = a.ncols();
    let ynorm = norm2(y);
    if a.nrows() > n {
        let (_, floor) = linalg::least_squares(a, y);
        if !feasible(floor, eta) {
            return Err(Error::Infeasible { floor, eta });
        }
    }

    let scale: Vec<f64> = if opts.normalize_columns {
        a.column_iter()
            .map(|c| {
                let nrm = c.norm();
                if nrm > 0.0 {
                    nrm
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; n]
    };
    let owned;
    let work: &DMatrix<f64> = if opts.normalize_columns {
        let mut m = a.clone();
        for (j, s) in scale.iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / s);
        }
        owned = m;
        &owned
    } else {
        a
    };

    let outer_tol = opts.outer_tol.unwrap_or_else(|| (1e-6 * ynorm).max(1e-10));
    let lasso = Lasso { a: work, y };
    let mut iterations = 0usize;
    let mut tau = 0.0;
    let mut x = vec![0.0; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    for _ in 0..opts.max_outer {
        let phi_prev_tol = opts.inner_tol;
        let s = lasso.solve(x, tau, phi_prev_tol, opts.max_inner, &mut iterations);
        let phi = norm2(&s.r);
        x = s.x.clone();
        if feasible(phi, eta) {
            let cand_l1 = l1(&x);
            if best.as_ref().is_none_or(|(_, b)| cand_l1 < *b) {
                best = Some((x.clone(), cand_l1));
            }
        }
        if (phi - eta).abs() <= outer_tol {
            converged = true;
            break;
        }
        let gnorm = inf_norm(&s.g);
        if gnorm <= f64::MIN_POSITIVE || phi == 0.0 {
            break;
        }
        let new_tau = tau + (phi - eta) * phi / gnorm;
        if (new_tau - tau).abs() <= 1e-16 * tau.abs().max(1.0) {
            converged = true;
            break;
        }
        tau = new_tau.max(0.0);
    }

    // Candidates in the working (possibly scaled) coordinates.
    let mut candidates: Vec<Vec<f64>> = vec![x.clone()];
    if let Some((b, _)) = &best {
        candidates.push(b.clone());
    }
    let cmax = inf_norm(&x);
    if cmax > 0.0 {
        let mut last_support: Vec<usize> = Vec::new();
        for rel in [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2] {
            let support: Vec<usize> = (0..n).filter(|&k| x[k].abs() > rel * cmax).collect();
            if support == last_support || support.is_empty() {
                continue;
            }
            let signs: Vec<f64> = support.iter().map(|&k| x[k].signum()).collect();
            if let Some(c) = polish_on_support(work, y, eta, &support, &signs) {
                candidates.push(c);
            } else if let Some(c) = min_norm_correction(work, y, eta, &x, &support) {
                candidates.push(c);
            }
            last_support = support;
        }
        let nz: Vec<usize> = (0..n).filter(|&k| x[k] != 0.0).collect();
        if nz.len() > work.nrows() {
            let (px, ps) = purify(work, &x, &nz);
            let signs: Vec<f64> = ps.iter().map(|&k| px[k].signum()).collect();
            candidates.push(polish_on_support(work, y, eta, &ps, &signs).unwrap_or(px));
        }
    }
    if eta == 0.0 {
        let start = candidates
            .iter()
            .filter(|c| feasible(norm2(&residual(work, c, y)), eta))
            .min_by(|p, q| l1(p).total_cmp(&l1(q)))
            .cloned();
        if let Some(c) = start.and_then(|s| simplex_refine(work, y, &s)) {
            candidates.push(c);
        }
    }
    let mut chosen: Option<(Vec<f64>, f64, f64)> = None;
    for cand in candidates {
        let res = norm2(&residual(work, &cand, y));
        if !feasible(res, eta) {
            continue;
        }
        let unscaled: Vec<f64> = cand.iter().zip(&scale).map(|(c, s)| c / s).collect();
        let norm = if opts.normalize_columns { l1(&cand) } else { l1(&unscaled) };
        if chosen.as_ref().is_none_or(|(_, b, _)| norm < *b) {
            chosen = Some((unscaled, norm, res));
        }
    }
    match chosen {
        Some((c, _, _)) => {
            let res = norm2(&residual(a, &c, y));
            Ok(SparseCoefficients {
                l1: l1(&c),
                residual_l2: res,
                c,
                iterations,
                eta,
            })
        }
        None => {
            if a.nrows() <= n {
                let (_, floor) = linalg::least_squares(a, y);
                if !feasible(floor, eta) {
                    return Err(Error::Infeasible { floor, eta });
                }
            }
            let best: Vec<f64> = x.iter().zip(&scale).map(|(c, s)| c / s).collect();
            let _ = converged;
            Err(Error::NonConvergence {
                iterations,
                residual: norm2(&residual(a, &best, y)),
                eta,
                best,
            })
        }
    }
}
