//! Spectral kernels whose eigenvalues minimize the RKHS norm of the target.
//!
//! For coefficients `c_k` of the target on an orthonormal basis and a trace
//! budget `kappa`, `sum c_k^2 / sigma_k` subject to `sum sigma_k = kappa` is
//! minimized by `sigma_k = kappa |c_k| / sum_j |c_j|`. The sparse pipeline
//! gets `c` from basis pursuit denoising; the iterative one projects the
//! previous kernel ridge approximant on the basis by quadrature.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::spectral_kernel;
use crate::polybasis::{QuadratureRule, TensorBasis};
use crate::regression::{self, Dataset, FitOptions, TrainedRegressor};
use crate::sparse::{self, BpdnOptions, SparseCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    /// Basis indices with `sigma > 0`.
    pub retained: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub kappa: f64,
    /// `|c_k|` on the retained indices.
    pub source_coeffs: Vec<f64>,
}

impl SpectralSolution {
    /// Full-length eigenvalue vector with zeros at dropped indices.
    pub fn dense_sigmas(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; r];
        for (&k, &s) in self.retained.iter().zip(&self.sigmas) {
            out[k] = s;
        }
        out
    }

    pub fn summary(&self) -> SigmaSummary {
        SigmaSummary {
            retained: self.sigmas.len(),
            min: self.sigmas.iter().cloned().fold(f64::INFINITY, f64::min),
            max: self.sigmas.iter().cloned().fold(0.0, f64::max),
            sum: self.sigmas.iter().sum(),
        }
    }

    /// Writes `multi_index,abs_coeff,sigma` for the retained indices.
    pub fn write_csv(&self, basis: &TensorBasis, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv_to(basis, file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, basis: &TensorBasis, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["multi_index", "abs_coeff", "sigma"])?;
        for ((&k, c), s) in self.retained.iter().zip(&self.source_coeffs).zip(&self.sigmas) {
            let mi = basis.multi_indices().get(k).ok_or(Error::IndexOutOfRange {
                index: k,
                len: basis.len(),
            })?;
            let mi: Vec<String> = mi.iter().map(|i| i.to_string()).collect();
            w.write_record([mi.join(" "), format!("{c:e}"), format!("{s:e}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub retained: usize,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

/// `sigma_k = kappa |c_k| / sum_j |c_j|` over `|c_k| > eps_drop`; the drop
/// floor defaults to `1e-12 max |c|`.
pub fn optimal_sigmas(c: &[f64], kappa: f64, eps_drop: Option<f64>) -> Result<SpectralSolution> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("trace budget must be positive, got {kappa}")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite coefficient"));
    }
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = eps_drop.unwrap_or(1e-12 * cmax);
    let retained: Vec<usize> = (0..c.len()).filter(|&k| c[k].abs() > floor).collect();
    if retained.is_empty() {
        return Err(Error::Degenerate(
            "every coefficient is below the drop floor".into(),
        ));
    }
    let source_coeffs: Vec<f64> = retained.iter().map(|&k| c[k].abs()).collect();
    let total: f64 = source_coeffs.iter().sum();
    let sigmas = source_coeffs.iter().map(|a| kappa * (a / total)).collect();
    Ok(SpectralSolution {
        retained,
        sigmas,
        kappa,
        source_coeffs,
    })
}

/// `sum_k c_k^2 / sigma_k`.
pub fn norm_objective(c: &[f64], sigmas: &[f64]) -> Result<f64> {
    if c.len() != sigmas.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            found: sigmas.len(),
        });
    }
    let mut acc = 0.0;
    for (k, (ck, sk)) in c.iter().zip(sigmas).enumerate() {
        if *ck == 0.0 {
            continue;
        }
        if !(*sk > 0.0) {
            return Err(Error::invalid(format!(
                "eigenvalue {k} is {sk} while its coefficient is nonzero"
            )));
        }
        acc += ck * ck / sk;
    }
    Ok(acc)
}

/// Unbiased sample variance.
pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let m = y.iter().sum::<f64>() / n as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// `Var(Y)`, or the mean square when the outputs are constant.
pub fn default_kappa(y: &[f64]) -> Result<f64> {
    let v = sample_variance(y);
    if v > 0.0 {
        return Ok(v);
    }
    let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64;
    if ms > 0.0 {
        Ok(ms)
    } else {
        Err(Error::ZeroVariance("outputs are identically zero".into()))
    }
}

#[derive(Debug, Clone)]
pub struct SskrrFit {
    pub regressor: TrainedRegressor,
    pub spectral: SpectralSolution,
    pub sparse: SparseCoefficients,
}

#[derive(Debug, Clone, Default)]
pub struct SskrrOptions {
    /// Trace budget; `None` uses the sample variance of `Y`.
    pub kappa: Option<f64>,
    pub eps_drop: Option<f64>,
    pub bpdn: BpdnOptions,
    pub fit: FitOptions,
}

/// Basis pursuit for the coefficients, optimal eigenvalues, then kernel
/// ridge regression with the resulting spectral kernel.
pub fn sskrr_fit(
    basis: &TensorBasis,
    data: &Dataset,
    eta: f64,
    nugget: f64,
    opts: &SskrrOptions,
) -> Result<SskrrFit> {
    let theta = sparse::build_theta(basis, data.x())?;
    let coeffs = theta.solve(data.y(), eta, &opts.bpdn)?;
    sskrr_from_coefficients(basis, data, coeffs, nugget, opts)
}

/// The second half of [`sskrr_fit`] for coefficients computed elsewhere.
pub fn sskrr_from_coefficients(
    basis: &TensorBasis,
    data: &Dataset,
    coeffs: SparseCoefficients,
    nugget: f64,
    opts: &SskrrOptions,
) -> Result<SskrrFit> {
    let kappa = match opts.kappa {
        Some(k) => k,
        None => default_kappa(data.y())?,
    };
    let spectral = optimal_sigmas(&coeffs.c, kappa, opts.eps_drop)?;
    let kernel = spectral_kernel(basis, &spectral.retained, &spectral.sigmas)?;
    let regressor = regression::fit(&kernel, nugget, data, opts.fit)?;
    Ok(SskrrFit {
        regressor,
        spectral,
        sparse: coeffs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NskrrRecord {
    pub n: usize,
    pub sigmas_summary: SigmaSummary,
    /// `sum c_k^2 / sigma_k` for the coefficients projected at this step;
    /// absent for the initial eigenvalues.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NskrrFit {
    pub regressor: TrainedRegressor,
    pub solution: SpectralSolution,
    pub trace: Vec<NskrrRecord>,
}

impl NskrrFit {
    pub fn trace_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trace)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NskrrOptions {
    /// Initial eigenvalues; `None` is uniform `kappa / R`.
    pub sigma0: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub eps_drop: Option<f64>,
    pub fit: FitOptions,
}

/// Iterates: fit with the current spectral kernel, project the approximant
/// on the basis with `rule`, and reset the eigenvalues from the projection.
/// The rule must integrate degree `2p` exactly in every dimension.
pub fn nskrr_fit(
    basis: &TensorBasis,
    data: &Dataset,
    nugget: f64,
    iterations: usize,
    rule: &QuadratureRule,
    opts: &NskrrOptions,
) -> Result<NskrrFit> {
    if rule.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rule.dim(),
        });
    }
    let need = 2 * basis.order();
    if let Some(r) = rule.rules().iter().find(|r| 2 * r.len() < need + 3) {
        return Err(Error::invalid(format!(
            "quadrature with {} nodes integrates degree {} exactly, below the required {need}",
            r.len(),
            (2 * r.len()).saturating_sub(3)
        )));
    }
    let r = basis.len();
    let kappa = match opts.kappa {
        Some(k) => k,
        None => default_kappa(data.y())?,
    };
    if !(kappa > 0.0) {
        return Err(Error::invalid("trace budget must be positive"));
    }
    let sigma0 = opts.sigma0.clone().unwrap_or_else(|| vec![kappa / r as f64; r]);
    if sigma0.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            found: sigma0.len(),
        });
    }
    if sigma0.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("initial eigenvalues must be positive"));
    }
    let s0: f64 = sigma0.iter().sum();
    if ((s0 - kappa) / kappa).abs() > 1e-10 {
        return Err(Error::invalid(format!(
            "initial eigenvalues sum to {s0}, expected {kappa}"
        )));
    }
    let mut solution = SpectralSolution {
        retained: (0..r).collect(),
        sigmas: sigma0,
        kappa,
        source_coeffs: vec![f64::NAN; r],
    };
    let mut trace = vec![NskrrRecord {
        n: 0,
        sigmas_summary: solution.summary(),
        objective: None,
    }];
    let nodes: Vec<(Vec<f64>, f64)> = rule.iter().collect();
    let points: Vec<Vec<f64>> = nodes.iter().map(|(x, _)| x.clone()).collect();
    let phis: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| basis.eval_all(x))
        .collect::<Result<_>>()?;
    let mut regressor = fit_spectral(basis, &solution, data, nugget, opts.fit)?;
    for n in 1..=iterations {
        let g = regressor.predict_mean_batch(&points)?;
        let mut c = vec![0.0; r];
        for ((phi, (_, w)), gv) in phis.iter().zip(&nodes).zip(&g) {
            let wg = w * gv;
            for (ck, p) in c.iter_mut().zip(phi) {
                *ck += wg * p;
            }
        }
        solution = match optimal_sigmas(&c, kappa, opts.eps_drop) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => return Err(Error::DegenerateIteration { iteration: n }),
            Err(e) => return Err(e),
        };
        let objective = norm_objective(&c, &solution.dense_sigmas(r)).ok();
        trace.push(NskrrRecord {
            n,
            sigmas_summary: solution.summary(),
            objective,
        });
        regressor = fit_spectral(basis, &solution, data, nugget, opts.fit)?;
    }
    Ok(NskrrFit {
        regressor,
        solution,
        trace,
    })
}

fn fit_spectral(
    basis: &TensorBasis,
    sol: &SpectralSolution,
    data: &Dataset,
    nugget: f64,
    opts: FitOptions,
) -> Result<TrainedRegressor> {
    let kernel = spectral_kernel(basis, &sol.retained, &sol.sigmas)?;
    regression::fit(&kernel, nugget, data, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_examples() {
        let s = optimal_sigmas(&[1.0, 1.0], 2.0, None).unwrap();
        assert_eq!(s.sigmas, vec![1.0, 1.0]);
        let s = optimal_sigmas(&[3.0, 1.0], 1.0, None).unwrap();
        assert_abs_diff_eq!(s.sigmas[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sigmas[1], 0.25, epsilon = 1e-15);
        let s = optimal_sigmas(&[5.0], 7.0, None).unwrap();
        assert_eq!(s.sigmas, vec![7.0]);
    }

    #[test]
    fn sigma_drops_and_degenerates() {
        let s = optimal_sigmas(&[2.0, 0.0, -1e-20, -2.0], 1.0, None).unwrap();
        assert_eq!(s.retained, vec![0, 3]);
        assert!(matches!(
            optimal_sigmas(&[0.0, 0.0], 1.0, None),
            Err(Error::Degenerate(_))
        ));
        assert!(optimal_sigmas(&[1.0], 0.0, None).is_err());
    }

    #[test]
    fn objective_examples() {
        assert_eq!(norm_objective(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(norm_objective(&[3.0, 1.0], &[0.75, 0.25]).unwrap(), 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_objective(&[3.0, 1.0], &[0.5, 0.5]).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(norm_objective(&[0.0, 0.0], &[0.3, 0.1]).unwrap(), 0.0);
        assert!(norm_objective(&[1.0], &[0.0]).is_err());
    }
}
