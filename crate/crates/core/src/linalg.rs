//! Dense factorizations shared by the regression, kernel flow and BPDN code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix. A pivot at or below
    /// `n * eps * max(diag)` is reported as [`Error::Singular`].
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::invalid("Cholesky needs a square matrix"));
        }
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let floor = (n.max(1) as f64) * f64::EPSILON * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > floor) || !d.is_finite() {
                return Err(Error::Singular { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `L z = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `L^T z = b` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// `b^T A^{-1} b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.forward(&mut z);
        z.iter().map(|v| v * v).sum()
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            let x = self.solve(col.as_slice());
            col.copy_from_slice(&x);
        }
        out
    }
}

/// Eigendecomposition pseudo-solver for symmetric positive semi-definite
/// matrices; eigenvalues below `rel_tol * max` are treated as zero.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    vectors: DMatrix<f64>,
    inv_values: DVector<f64>,
}

impl PseudoInverse {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let inv_values = eig
            .eigenvalues
            .map(|v| if v > rel_tol * max { 1.0 / v } else { 0.0 });
        Self {
            vectors: eig.eigenvectors,
            inv_values,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(b);
        let mut z = self.vectors.tr_mul(&b);
        z.component_mul_assign(&self.inv_values);
        (&self.vectors * z).as_slice().to_vec()
    }

    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let b = DVector::from_column_slice(b);
        let z = self.vectors.tr_mul(&b);
        z.iter().zip(self.inv_values.iter()).map(|(v, w)| v * v * w).sum()
    }
}

/// Least-squares solution of `A x ~ b` and its residual norm, through the
/// singular value decomposition (rank threshold `1e-12 * s_max`).
pub fn least_squares(a: &DMatrix<f64>, b: &[f64]) -> (Vec<f64>, f64) {
    let bv = DVector::from_column_slice(b);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-12 * smax.max(f64::MIN_POSITIVE);
    let x = svd
        .solve(&bv, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let r = a * &x - &bv;
    (x.as_slice().to_vec(), r.norm())
}

/// Smallest eigenvalue and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let ch = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = ch.solve(&b);
        let ax = &a * DVector::from_column_slice(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(ax[i], b[i], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(ch.quad_form(&b), dot(&b, &x), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match Cholesky::new(&a) {
            Err(Error::Singular { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_inverse_on_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = PseudoInverse::new(&a, 1e-12);
        let x = p.solve(&[2.0, 2.0]);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
    }
}
