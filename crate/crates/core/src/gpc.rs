//! Polynomial chaos surrogates `G(x) = sum_k c_k phi_k(x)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{QuadratureRule, TensorBasis};
use crate::sparse::{self, SparseCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Quadrature,
    Bpdn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpcSurrogate {
    basis: TensorBasis,
    coeffs: Vec<f64>,
    provenance: Provenance,
}

impl GpcSurrogate {
    pub fn new(basis: TensorBasis, coeffs: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coefficient"));
        }
        Ok(Self {
            basis,
            coeffs,
            provenance,
        })
    }

    pub fn from_bpdn(basis: &TensorBasis, sol: &SparseCoefficients) -> Result<Self> {
        Self::new(basis.clone(), sol.c.clone(), Provenance::Bpdn)
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let phi = self.basis.eval_all(x)?;
        Ok(phi.iter().zip(&self.coeffs).map(|(p, c)| p * c).sum())
    }

    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }

    /// Mean `c_0` and variance `sum_{k>0} c_k^2`.
    pub fn moments(&self) -> (f64, f64) {
        let var = self.coeffs.iter().skip(1).map(|c| c * c).sum();
        (self.coeffs[0], var)
    }

    /// First-order Sobol' indices: variance share of the multi-indices
    /// active in a single dimension.
    pub fn sobol_main(&self) -> Result<Vec<f64>> {
        let (_, var) = self.moments();
        if !(var > 0.0) {
            return Err(Error::ZeroVariance("surrogate is constant".into()));
        }
        let mut parts = vec![0.0; self.basis.dim()];
        for (mi, c) in self.basis.multi_indices().iter().zip(&self.coeffs) {
            let mut active = mi.iter().enumerate().filter(|(_, &v)| v > 0);
            if let (Some((j, _)), None) = (active.next(), active.next()) {
                parts[j] += c * c;
            }
        }
        Ok(parts.into_iter().map(|p| p / var).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GpcSurrogate = serde_json::from_str(s)?;
        Self::new(g.basis, g.coeffs, g.provenance)
    }

    /// Same `index,multi_index,value` layout as the sparse coefficient dump.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        sparse::write_coefficients_csv(&self.basis, &self.coeffs, file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        sparse::write_coefficients_csv(&self.basis, &self.coeffs, writer)
    }
}

/// `c_k = sum_l w_l f(x_l) phi_k(x_l)`. `f` is called concurrently from
/// several threads.
pub fn project_quadrature<F>(basis: &TensorBasis, f: F, rule: &QuadratureRule) -> Result<GpcSurrogate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if rule.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rule.dim(),
        });
    }
    let values: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .map(|l| f(&rule.node(l).0))
        .collect();
    project_values(basis, rule, &values)
}

/// Projection from target values listed in node order.
pub fn project_values(basis: &TensorBasis, rule: &QuadratureRule, values: &[f64]) -> Result<GpcSurrogate> {
    if rule.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rule.dim(),
        });
    }
    if values.len() != rule.len() {
        return Err(Error::DimensionMismatch {
            expected: rule.len(),
            found: values.len(),
        });
    }
    let r = basis.len();
    let mut c = vec![0.0; r];
    let mut phi = vec![0.0; r];
    for (l, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite target value at node {l}")));
        }
        let (x, w) = rule.node(l);
        basis.eval_all_into(&x, &mut phi);
        let wv = w * v;
        for (ck, p) in c.iter_mut().zip(&phi) {
            *ck += wv * p;
        }
    }
    GpcSurrogate::new(basis.clone(), c, Provenance::Quadrature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::UnivariateFamily;
    use approx::assert_abs_diff_eq;

    fn basis(d: usize, p: usize) -> TensorBasis {
        TensorBasis::isotropic(UnivariateFamily::legendre(-1.0, 1.0).unwrap(), d, p).unwrap()
    }

    #[test]
    fn projects_basis_function_to_unit_vector() {
        let b = basis(2, 4);
        let rule = QuadratureRule::exact_for_degree(&b, 8).unwrap();
        for j in [0, 3, 9, 14] {
            let g = project_quadrature(&b, |x| b.eval(j, x).unwrap(), &rule).unwrap();
            for (k, c) in g.coeffs().iter().enumerate() {
                assert_abs_diff_eq!(*c, if k == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn constant_target() {
        let b = basis(3, 2);
        let rule = QuadratureRule::exact_for_degree(&b, 4).unwrap();
        let g = project_quadrature(&b, |_| 3.0, &rule).unwrap();
        assert_abs_diff_eq!(g.coeffs()[0], 3.0, epsilon = 1e-13);
        let (m, v) = g.moments();
        assert_abs_diff_eq!(m, 3.0, epsilon = 1e-13);
        assert!(v < 1e-24);
    }

    #[test]
    fn sobol_single_and_additive() {
        let b = basis(3, 2);
        let k = b.multi_indices().position(&[2, 0, 0]).unwrap();
        let mut c = vec![0.0; b.len()];
        c[k] = 1.3;
        let g = GpcSurrogate::new(b.clone(), c, Provenance::Bpdn).unwrap();
        assert_eq!(g.sobol_main().unwrap(), vec![1.0, 0.0, 0.0]);

        let b2 = basis(2, 1);
        let g = GpcSurrogate::new(b2, vec![0.0, 0.7, 0.7], Provenance::Bpdn).unwrap();
        let s = g.sobol_main().unwrap();
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-15);

        let g = GpcSurrogate::new(basis(2, 1), vec![1.0, 0.0, 0.0], Provenance::Bpdn).unwrap();
        assert!(matches!(g.sobol_main(), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn json_round_trip() {
        let b = basis(2, 2);
        let g = GpcSurrogate::new(b, vec![1.0, 0.5, 0.0, 0.0, -0.25, 0.0], Provenance::Quadrature).unwrap();
        let back = GpcSurrogate::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
