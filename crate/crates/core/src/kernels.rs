//! Base kernels, Gram assembly and spectral Mercer kernels.
//!
//! The Gaussian kernel is `exp(-|x-y|^2 / gamma^2)`; the rational quadratic
//! kernel is `(1 + r^2 / (2 alpha gamma^2))^-alpha`, so its large-`alpha`
//! limit is `exp(-r^2 / (2 gamma^2))`, not the Gaussian above.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::TensorBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian { gamma: f64 },
    GaussianArd { gammas: Vec<f64> },
    Polynomial { offset: f64, exponent: u32 },
    /// Half-integer smoothness only: `nu` is 0.5, 1.5 or 2.5.
    Matern { gamma: f64, nu: f64 },
    RationalQuadratic { alpha: f64, gamma: f64 },
    Spectral(SpectralKernel),
}

/// `K(x, y) = sum_k sigma_k phi_k(x) phi_k(y)` over retained basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralDescriptor", into = "SpectralDescriptor")]
pub struct SpectralKernel {
    basis: TensorBasis,
    indices: Vec<usize>,
    sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpectralDescriptor {
    basis: TensorBasis,
    retained: Vec<Vec<usize>>,
    sigmas: Vec<f64>,
}

impl TryFrom<SpectralDescriptor> for SpectralKernel {
    type Error = Error;

    fn try_from(desc: SpectralDescriptor) -> Result<Self> {
        let indices = desc
            .retained
            .iter()
            .map(|mi| {
                desc.basis
                    .multi_indices()
                    .position(mi)
                    .ok_or_else(|| Error::invalid(format!("multi-index {mi:?} not in basis")))
            })
            .collect::<Result<Vec<_>>>()?;
        SpectralKernel::new(desc.basis, &indices, &desc.sigmas)
    }
}

impl From<SpectralKernel> for SpectralDescriptor {
    fn from(k: SpectralKernel) -> Self {
        let retained = k
            .indices
            .iter()
            .map(|&i| k.basis.multi_indices().get(i).unwrap().to_vec())
            .collect();
        SpectralDescriptor {
            basis: k.basis,
            retained,
            sigmas: k.sigmas,
        }
    }
}

impl SpectralKernel {
    /// Entries with `sigma == 0` are dropped.
    pub fn new(basis: TensorBasis, retained: &[usize], sigmas: &[f64]) -> Result<Self> {
        if retained.len() != sigmas.len() {
            return Err(Error::DimensionMismatch {
                expected: retained.len(),
                found: sigmas.len(),
            });
        }
        let mut indices = Vec::with_capacity(retained.len());
        let mut kept = Vec::with_capacity(retained.len());
        for (&k, &s) in retained.iter().zip(sigmas) {
            if k >= basis.len() {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    len: basis.len(),
                });
            }
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!("spectral weight {s} must be finite and >= 0")));
            }
            if s > 0.0 {
                indices.push(k);
                kept.push(s);
            }
        }
        Ok(Self {
            basis,
            indices,
            sigmas: kept,
        })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    /// Retained basis indices with nonzero weight.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `sum_k sigma_k`, the trace of the integral operator.
    pub fn trace(&self) -> f64 {
        self.sigmas.iter().sum()
    }

    fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.basis.eval_subset(&self.indices, x)
    }

    fn combine(&self, fx: &[f64], fy: &[f64]) -> f64 {
        self.sigmas
            .iter()
            .zip(fx)
            .zip(fy)
            .map(|((s, a), b)| s * (a * b))
            .sum()
    }
}

/// Builds the spectral kernel of `basis` restricted to `retained`.
pub fn spectral_kernel(basis: &TensorBasis, retained: &[usize], sigmas: &[f64]) -> Result<KernelSpec> {
    Ok(KernelSpec::Spectral(SpectralKernel::new(
        basis.clone(),
        retained,
        sigmas,
    )?))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn gaussian_ard(gammas: Vec<f64>) -> Result<Self> {
        let k = KernelSpec::GaussianArd { gammas };
        k.validate()?;
        Ok(k)
    }

    pub fn matern(gamma: f64, nu: f64) -> Result<Self> {
        let k = KernelSpec::Matern { gamma, nu };
        k.validate()?;
        Ok(k)
    }

    pub fn rational_quadratic(alpha: f64, gamma: f64) -> Result<Self> {
        let k = KernelSpec::RationalQuadratic { alpha, gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(offset: f64, exponent: u32) -> Result<Self> {
        let k = KernelSpec::Polynomial { offset, exponent };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { gamma } => positive("gamma", *gamma),
            KernelSpec::GaussianArd { gammas } => {
                if gammas.is_empty() {
                    return Err(Error::invalid("ARD kernel needs at least one length scale"));
                }
                gammas.iter().try_for_each(|g| positive("gamma", *g))
            }
            KernelSpec::Polynomial { offset, exponent } => {
                if !(*offset >= 0.0) || !offset.is_finite() {
                    return Err(Error::invalid(format!("offset must be >= 0, got {offset}")));
                }
                if *exponent == 0 {
                    return Err(Error::invalid("polynomial exponent must be positive"));
                }
                Ok(())
            }
            KernelSpec::Matern { gamma, nu } => {
                positive("gamma", *gamma)?;
                if [0.5, 1.5, 2.5].contains(nu) {
                    Ok(())
                } else {
                    Err(Error::Unsupported(format!(
                        "Matern smoothness {nu}; only 0.5, 1.5 and 2.5 are available"
                    )))
                }
            }
            KernelSpec::RationalQuadratic { alpha, gamma } => {
                positive("alpha", *alpha)?;
                positive("gamma", *gamma)
            }
            KernelSpec::Spectral(_) => Ok(()),
        }
    }

    /// Input dimension if the kernel fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            KernelSpec::GaussianArd { gammas } => Some(gammas.len()),
            KernelSpec::Spectral(s) => Some(s.basis.dim()),
            _ => None,
        }
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        self.check_dim(x.len())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(e) if e != d => Err(Error::DimensionMismatch {
                expected: e,
                found: d,
            }),
            _ => Ok(()),
        }
    }

    /// Evaluates a stationary or dot-product kernel without dimension checks.
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { gamma } => (-sq_dist(x, y) / (gamma * gamma)).exp(),
            KernelSpec::GaussianArd { gammas } => {
                let s: f64 = x
                    .iter()
                    .zip(y)
                    .zip(gammas)
                    .map(|((a, b), g)| {
                        let t = (a - b) / g;
                        t * t
                    })
                    .sum();
                (-s).exp()
            }
            KernelSpec::Polynomial { offset, exponent } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (offset + dot).powi(*exponent as i32)
            }
            KernelSpec::Matern { gamma, nu } => {
                let r = sq_dist(x, y).sqrt() / gamma;
                matern(r, *nu)
            }
            KernelSpec::RationalQuadratic { alpha, gamma } => {
                let r2 = sq_dist(x, y);
                (1.0 + r2 / (2.0 * alpha * gamma * gamma)).powf(-alpha)
            }
            KernelSpec::Spectral(s) => {
                let fx = s.features(x).expect("dimension checked");
                let fy = s.features(y).expect("dimension checked");
                s.combine(&fx, &fy)
            }
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn matern(r: f64, nu: f64) -> f64 {
    if nu == 0.5 {
        (-r).exp()
    } else if nu == 1.5 {
        let t = 3f64.sqrt() * r;
        (1.0 + t) * (-t).exp()
    } else {
        let t = 5f64.sqrt() * r;
        (1.0 + t + t * t / 3.0) * (-t).exp()
    }
}

/// `K(x, y)`.
pub fn kernel_eval(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.check_dims(x, y)?;
    Ok(k.eval_unchecked(x, y))
}

fn check_points(k: &KernelSpec, pts: &[Vec<f64>]) -> Result<Option<usize>> {
    let Some(first) = pts.first() else {
        return Ok(None);
    };
    let d = first.len();
    for p in pts {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    k.check_dim(d)?;
    Ok(Some(d))
}

/// Symmetric Gram matrix `K(X, X)`; the upper triangle is mirrored from the
/// lower one so symmetry is exact.
pub fn gram(k: &KernelSpec, pts: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_points(k, pts)?;
    let n = pts.len();
    let mut m = DMatrix::zeros(n, n);
    if let KernelSpec::Spectral(s) = k {
        let feats = pts
            .iter()
            .map(|p| s.features(p))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            for j in 0..=i {
                let v = s.combine(&feats[i], &feats[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        return Ok(m);
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| k.eval_unchecked(&pts[i], &pts[j])).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Cross matrix with entry `(i, j) = K(a_i, b_j)`.
pub fn cross(k: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let da = check_points(k, a)?;
    let db = check_points(k, b)?;
    if let (Some(da), Some(db)) = (da, db) {
        if da != db {
            return Err(Error::DimensionMismatch {
                expected: da,
                found: db,
            });
        }
    }
    let mut m = DMatrix::zeros(a.len(), b.len());
    if let KernelSpec::Spectral(s) = k {
        let fa = a.iter().map(|p| s.features(p)).collect::<Result<Vec<_>>>()?;
        let fb = b.iter().map(|p| s.features(p)).collect::<Result<Vec<_>>>()?;
        for (i, x) in fa.iter().enumerate() {
            for (j, y) in fb.iter().enumerate() {
                m[(i, j)] = s.combine(x, y);
            }
        }
        return Ok(m);
    }
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| k.eval_unchecked(x, y)).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Diagonal values `K(x, x)`.
pub fn diagonal(k: &KernelSpec, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_points(k, pts)?;
    Ok(pts.iter().map(|p| k.eval_unchecked(p, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::UnivariateFamily;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_is_one_on_diagonal() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(kernel_eval(&k, &[0.3, -0.2], &[0.3, -0.2]).unwrap(), 1.0);
    }

    #[test]
    fn matern_three_halves_at_unit_distance() {
        let k = KernelSpec::matern(1.0, 1.5).unwrap();
        let v = kernel_eval(&k, &[0.0, 0.0], &[0.6, 0.8]).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(v, (1.0 + s3) * (-s3).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.48335, epsilon = 1e-5);
    }

    #[test]
    fn rq_large_alpha_limit() {
        let k = KernelSpec::rational_quadratic(1e6, 1.0).unwrap();
        let v = kernel_eval(&k, &[0.0], &[0.7]).unwrap();
        assert_abs_diff_eq!(v, (-0.49f64 / 2.0).exp(), epsilon = 1e-5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian_ard(vec![1.0, -1.0]).is_err());
        assert!(matches!(KernelSpec::matern(1.0, 0.7), Err(Error::Unsupported(_))));
        assert!(KernelSpec::polynomial(-1.0, 2).is_err());
        assert!(KernelSpec::polynomial(1.0, 0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let k = KernelSpec::gaussian_ard(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            kernel_eval(&k, &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert!(kernel_eval(&g, &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gram_single_point_and_duplicates() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let g = gram(&k, &[vec![0.5]]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        let g = gram(&k, &[vec![0.5], vec![0.5], vec![0.1]]).unwrap();
        let (min, _) = crate::linalg::eigen_range(&g);
        assert!(min.abs() < 1e-12);
    }

    #[test]
    fn spectral_constant_and_zero() {
        let b = TensorBasis::isotropic(UnivariateFamily::legendre(-1.0, 1.0).unwrap(), 2, 3).unwrap();
        let k = spectral_kernel(&b, &[0], &[2.5]).unwrap();
        assert_abs_diff_eq!(kernel_eval(&k, &[0.1, 0.9], &[-0.7, 0.2]).unwrap(), 2.5, epsilon = 1e-14);
        let z = spectral_kernel(&b, &[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(kernel_eval(&z, &[0.1, 0.9], &[-0.7, 0.2]).unwrap(), 0.0);
        assert!(spectral_kernel(&b, &[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn spectral_json_round_trip() {
        let b = TensorBasis::isotropic(UnivariateFamily::legendre(-1.0, 1.0).unwrap(), 2, 3).unwrap();
        let k = spectral_kernel(&b, &[0, 4, 7], &[1.0, 0.0, 0.25]).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        assert!(json.contains("\"kind\":\"spectral\""));
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        if let KernelSpec::Spectral(s) = &back {
            assert_eq!(s.indices(), &[0, 7]);
        }
    }

    #[test]
    fn cross_matches_eval() {
        let k = KernelSpec::matern(0.7, 2.5).unwrap();
        let a = vec![vec![0.0, 1.0], vec![0.3, 0.2]];
        let b = vec![vec![1.0, 1.0], vec![0.1, 0.2], vec![-0.5, 0.0]];
        let c = cross(&k, &a, &b).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(c[(i, j)], kernel_eval(&k, &a[i], &b[j]).unwrap());
            }
        }
    }
}
