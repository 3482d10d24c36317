//! Parametric kernel flow.
//!
//! At each iteration a random subset of `N_f` training points and a half of
//! it of size `N_c = floor(N_f / 2)` are drawn, and the parameters move down
//! the gradient of
//! `rho = 1 - Y_c^T A_c^-1 Y_c / Y_f^T A_f^-1 Y_f`, `A = K + lambda I`.
//! Each iterate is scored by the RMSE on a validation set of a regressor fit
//! on the full training set, and the best one is kept.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::linalg::{dot, Cholesky};
use crate::regression::{self, Dataset, FitOptions};

/// Kernel families whose parameters kernel flow can tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KfFamily {
    /// `theta = (gamma)`.
    Gaussian,
    /// `theta = (gamma_1, ..., gamma_d)`.
    GaussianArd { dim: usize },
    /// A fixed kernel; only the nugget can be tuned.
    Fixed { kernel: KernelSpec },
}

impl KfFamily {
    /// Number of kernel parameters, the nugget excluded.
    pub fn n_kernel_params(&self) -> usize {
        match self {
            KfFamily::Gaussian => 1,
            KfFamily::GaussianArd { dim } => *dim,
            KfFamily::Fixed { .. } => 0,
        }
    }

    pub fn kernel(&self, theta: &[f64]) -> Result<KernelSpec> {
        let k = self.n_kernel_params();
        if theta.len() < k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: theta.len(),
            });
        }
        match self {
            KfFamily::Gaussian => KernelSpec::gaussian(theta[0]),
            KfFamily::GaussianArd { .. } => KernelSpec::gaussian_ard(theta[..k].to_vec()),
            KfFamily::Fixed { kernel } => Ok(kernel.clone()),
        }
    }

    // dK/dtheta_m for every kernel parameter at one pair of points.
    fn kernel_derivs(&self, theta: &[f64], x: &[f64], y: &[f64], kval: f64, out: &mut [f64]) {
        match self {
            KfFamily::Gaussian => {
                let g = theta[0];
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                out[0] = kval * 2.0 * r2 / (g * g * g);
            }
            KfFamily::GaussianArd { .. } => {
                for (m, o) in out.iter_mut().enumerate() {
                    let g = theta[m];
                    let dm = x[m] - y[m];
                    *o = kval * 2.0 * dm * dm / (g * g * g);
                }
            }
            KfFamily::Fixed { .. } => {}
        }
    }
}

/// Everything needed to evaluate `rho` for one parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct KfParams<'a> {
    pub family: &'a KfFamily,
    /// Kernel parameters, followed by the nugget when `nugget_included`.
    pub theta: &'a [f64],
    pub nugget_included: bool,
    /// Nugget used when it is not part of `theta`.
    pub fixed_nugget: f64,
}

impl KfParams<'_> {
    fn nugget(&self) -> f64 {
        if self.nugget_included {
            self.theta[self.family.n_kernel_params()]
        } else {
            self.fixed_nugget
        }
    }

    fn expected_len(&self) -> usize {
        self.family.n_kernel_params() + usize::from(self.nugget_included)
    }
}

struct Quad {
    value: f64,
    alpha: Vec<f64>,
    kmat: DMatrix<f64>,
}

fn quad_form(kernel: &KernelSpec, nugget: f64, x: &[Vec<f64>], y: &[f64]) -> Result<Quad> {
    let kmat = kernels::gram(kernel, x)?;
    let mut a = kmat.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += nugget;
    }
    let ch = Cholesky::new(&a)?;
    let alpha = ch.solve(y);
    Ok(Quad {
        value: dot(y, &alpha),
        alpha,
        kmat,
    })
}

// d(y^T A^-1 y)/dtheta = -alpha^T dA alpha for every entry of theta.
fn quad_grad(p: &KfParams, x: &[Vec<f64>], q: &Quad) -> Vec<f64> {
    let nk = p.family.n_kernel_params();
    let mut grad = vec![0.0; p.expected_len()];
    let mut dk = vec![0.0; nk];
    let n = x.len();
    if nk > 0 {
        for i in 0..n {
            for j in 0..=i {
                p.family
                    .kernel_derivs(p.theta, &x[i], &x[j], q.kmat[(i, j)], &mut dk);
                let w = if i == j { 1.0 } else { 2.0 } * q.alpha[i] * q.alpha[j];
                for (g, d) in grad.iter_mut().zip(&dk) {
                    *g -= w * d;
                }
            }
        }
    }
    if p.nugget_included {
        grad[nk] = -dot(&q.alpha, &q.alpha);
    }
    grad
}

fn subset(data: &Dataset, idx: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    Ok(data.select(idx)?.into_parts())
}

fn check_theta(p: &KfParams) -> Result<()> {
    if p.theta.len() != p.expected_len() {
        return Err(Error::DimensionMismatch {
            expected: p.expected_len(),
            found: p.theta.len(),
        });
    }
    if p.nugget_included && !(p.nugget() >= 0.0) {
        return Err(Error::invalid("nugget must be >= 0"));
    }
    Ok(())
}

fn rho_parts(p: &KfParams, fine: &Dataset, coarse_idx: &[usize], with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    check_theta(p)?;
    if coarse_idx.is_empty() {
        return Err(Error::invalid("coarse set is empty"));
    }
    let kernel = p.family.kernel(p.theta)?;
    let nugget = p.nugget();
    let (xc, yc) = subset(fine, coarse_idx)?;
    let qf = quad_form(&kernel, nugget, fine.x(), fine.y())?;
    if !(qf.value > 0.0) {
        return Err(Error::Degenerate(
            "fine quadratic form vanishes (zero outputs)".into(),
        ));
    }
    let qc = quad_form(&kernel, nugget, &xc, &yc)?;
    let ratio = qc.value / qf.value;
    let mut rho = 1.0 - ratio;
    if !(-1e-10..=1.0 + 1e-10).contains(&rho) {
        return Err(Error::Numerical(format!("rho = {rho} outside [0, 1]")));
    }
    rho = rho.clamp(0.0, 1.0);
    let grad = if with_grad {
        let gf = quad_grad(p, fine.x(), &qf);
        let gc = quad_grad(p, &xc, &qc);
        Some(
            gf.iter()
                .zip(&gc)
                .map(|(df, dc)| -(dc * qf.value - qc.value * df) / (qf.value * qf.value))
                .collect(),
        )
    } else {
        None
    };
    Ok((rho, grad))
}

/// `rho` for the fine set and the coarse rows `coarse_idx` of it.
pub fn rho(p: &KfParams, fine: &Dataset, coarse_idx: &[usize]) -> Result<f64> {
    Ok(rho_parts(p, fine, coarse_idx, false)?.0)
}

/// Analytic gradient of [`rho`] with respect to `theta` (not its logarithm).
pub fn rho_grad(p: &KfParams, fine: &Dataset, coarse_idx: &[usize]) -> Result<Vec<f64>> {
    if let KfFamily::Fixed { .. } = p.family {
        if !p.nugget_included {
            return Err(Error::Unsupported(
                "fixed kernel without nugget has no parameters".into(),
            ));
        }
    }
    Ok(rho_parts(p, fine, coarse_idx, true)?.1.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTransform {
    Log,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KfConfig {
    /// `N_f`; `None` uses every training point.
    pub n_fine: Option<usize>,
    pub learning_rate: f64,
    pub iterations: usize,
    pub param_transform: ParamTransform,
    pub nugget_included: bool,
    /// Nugget when it is not optimized.
    pub fixed_nugget: f64,
    pub seed: u64,
    /// Per-parameter `[lo, hi]` box in parameter units.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub momentum: f64,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            n_fine: None,
            learning_rate: 0.05,
            iterations: 100,
            param_transform: ParamTransform::Log,
            nugget_included: true,
            fixed_nugget: 0.0,
            seed: 0,
            bounds: None,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfRecord {
    pub n: usize,
    pub theta: Vec<f64>,
    /// `None` when the Gram matrices were singular at this iterate.
    pub rho: Option<f64>,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfTrace {
    pub records: Vec<KfRecord>,
    pub selected: usize,
    pub theta_star: Vec<f64>,
}

impl KfTrace {
    fn from_records(records: Vec<KfRecord>) -> Self {
        let mut selected = 0;
        let mut best = f64::INFINITY;
        for (i, r) in records.iter().enumerate() {
            if let Some(v) = r.validation_rmse {
                if v < best {
                    best = v;
                    selected = i;
                }
            }
        }
        let theta_star = records.get(selected).map(|r| r.theta.clone()).unwrap_or_default();
        Self {
            records,
            selected,
            theta_star,
        }
    }

    /// Writes `iteration,theta_1,...,rho,validation_rmse`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let np = self.records.first().map_or(0, |r| r.theta.len());
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=np).map(|j| format!("theta_{j}")));
        header.push("rho".into());
        header.push("validation_rmse".into());
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.records {
            let mut rec = vec![r.n.to_string()];
            rec.extend(r.theta.iter().map(|t| format!("{t:e}")));
            rec.push(opt(r.rho));
            rec.push(opt(r.validation_rmse));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean Euclidean distance over all pairs of points.
pub fn mean_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            s += x[j]
                .iter()
                .zip(&x[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    2.0 * s / (n * (n - 1)) as f64
}

/// Length scales at the mean pairwise distance and, when included, a
/// nugget of `1e-6`.
pub fn initial_theta(family: &KfFamily, x: &[Vec<f64>], nugget_included: bool) -> Vec<f64> {
    let mpd = mean_pairwise_distance(x);
    let mut theta = vec![mpd; family.n_kernel_params()];
    if nugget_included {
        theta.push(1e-6);
    }
    theta
}

fn validation_rmse(
    family: &KfFamily,
    theta: &[f64],
    nugget: f64,
    train: &Dataset,
    val: &Dataset,
) -> Result<f64> {
    let kernel = family.kernel(theta)?;
    let reg = regression::fit(&kernel, nugget, train, FitOptions::default())?;
    let pred = reg.predict_mean_batch(val.x())?;
    let mse = pred
        .iter()
        .zip(val.y())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / val.len() as f64;
    Ok(mse.sqrt())
}

fn is_singular(e: &Error) -> bool {
    matches!(e, Error::Singular { .. })
}

/// Runs `cfg.iterations` descent steps from `theta0` and returns the trace
/// of `iterations + 1` records with the best-validation iterate selected.
pub fn kf_run(
    train: &Dataset,
    val: &Dataset,
    family: &KfFamily,
    theta0: &[f64],
    cfg: &KfConfig,
) -> Result<KfTrace> {
    let i = train.len();
    let n_fine = cfg.n_fine.unwrap_or(i);
    if n_fine < 2 || n_fine > i {
        return Err(Error::invalid(format!(
            "n_fine must lie in [2, {i}], got {n_fine}"
        )));
    }
    if !(cfg.learning_rate >= 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("learning rate must be >= 0 and momentum in [0, 1)"));
    }
    if let KfFamily::GaussianArd { dim } = family {
        if *dim != train.dim() {
            return Err(Error::DimensionMismatch {
                expected: *dim,
                found: train.dim(),
            });
        }
    }
    fn params<'a>(family: &'a KfFamily, theta: &'a [f64], cfg: &KfConfig) -> KfParams<'a> {
        KfParams {
            family,
            theta,
            nugget_included: cfg.nugget_included,
            fixed_nugget: cfg.fixed_nugget,
        }
    }
    check_theta(&params(family, theta0, cfg))?;
    if params(family, theta0, cfg).expected_len() == 0 {
        return Err(Error::Unsupported("no parameter to tune".into()));
    }
    if cfg.param_transform == ParamTransform::Log && theta0.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("log-space descent needs positive parameters"));
    }
    if let Some(b) = &cfg.bounds {
        if b.len() != theta0.len() {
            return Err(Error::DimensionMismatch {
                expected: theta0.len(),
                found: b.len(),
            });
        }
        for (t, (lo, hi)) in theta0.iter().zip(b) {
            if t < lo || t > hi {
                return Err(Error::invalid(format!("initial parameter {t} outside [{lo}, {hi}]")));
            }
        }
    }

    let n_coarse = n_fine / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0.to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut consecutive = 0usize;
    for n in 0..=cfg.iterations {
        let fine_idx = rand::seq::index::sample(&mut rng, i, n_fine).into_vec();
        let coarse_pos = rand::seq::index::sample(&mut rng, n_fine, n_coarse).into_vec();
        let fine = train.select(&fine_idx)?;
        let p = params(family, &theta, cfg);
        let last = n == cfg.iterations;
        let eval = rho_parts(&p, &fine, &coarse_pos, !last);
        let nugget = p.nugget();
        let vr = validation_rmse(family, &theta, nugget, train, val);
        let (rho_v, grad) = match eval {
            Ok((r, g)) => (Some(r), g),
            Err(e) if is_singular(&e) => (None, None),
            Err(e) => return Err(e),
        };
        let vr = match vr {
            Ok(v) => Some(v),
            Err(e) if is_singular(&e) => None,
            Err(e) => return Err(e),
        };
        records.push(KfRecord {
            n,
            theta: theta.clone(),
            rho: rho_v,
            validation_rmse: vr,
        });
        if rho_v.is_none() {
            consecutive += 1;
            if consecutive > 10 {
                return Err(Error::KfAborted {
                    consecutive,
                    trace: Box::new(KfTrace::from_records(records)),
                });
            }
            continue;
        }
        consecutive = 0;
        let Some(grad) = grad else { continue };
        for (m, g) in grad.iter().enumerate() {
            let g = match cfg.param_transform {
                ParamTransform::Log => g * theta[m],
                ParamTransform::Identity => *g,
            };
            velocity[m] = cfg.momentum * velocity[m] + g;
        }
        for (m, t) in theta.iter_mut().enumerate() {
            let mut next = match cfg.param_transform {
                ParamTransform::Log => *t * (-cfg.learning_rate * velocity[m]).exp(),
                ParamTransform::Identity => *t - cfg.learning_rate * velocity[m],
            };
            if let Some(b) = &cfg.bounds {
                next = next.clamp(b[m].0, b[m].1);
            }
            if cfg.param_transform == ParamTransform::Identity {
                next = next.max(if m < family.n_kernel_params() { 1e-12 } else { 0.0 });
            }
            *t = next;
        }
    }
    Ok(KfTrace::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn data() -> Dataset {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64 / 11.0;
                vec![t, (3.0 * t).sin()]
            })
            .collect();
        let y = x.iter().map(|p| p[0] * p[0] - p[1]).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn coarse_equals_fine_gives_zero() {
        let d = data();
        let fam = KfFamily::Gaussian;
        let p = KfParams {
            family: &fam,
            theta: &[0.5, 1e-8],
            nugget_included: true,
            fixed_nugget: 0.0,
        };
        let all: Vec<usize> = (0..d.len()).collect();
        assert_abs_diff_eq!(rho(&p, &d, &all).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_outputs_rejected() {
        let d = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
        let fam = KfFamily::Gaussian;
        let p = KfParams {
            family: &fam,
            theta: &[0.5],
            nugget_included: false,
            fixed_nugget: 0.0,
        };
        assert!(rho(&p, &d, &[0]).is_err());
    }

    #[test]
    fn zero_rate_keeps_theta() {
        let d = data();
        let val = d.select(&[1, 5, 9]).unwrap();
        let fam = KfFamily::GaussianArd { dim: 2 };
        let cfg = KfConfig {
            learning_rate: 0.0,
            iterations: 4,
            ..Default::default()
        };
        let tr = kf_run(&d, &val, &fam, &[0.5, 0.5, 1e-6], &cfg).unwrap();
        assert_eq!(tr.records.len(), 5);
        assert!(tr.records.iter().all(|r| r.theta == vec![0.5, 0.5, 1e-6]));
    }

    #[test]
    fn mean_pairwise_distance_small() {
        let x = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 4.0]];
        assert_abs_diff_eq!(mean_pairwise_distance(&x), (5.0 + 4.0 + 3.0) / 3.0, epsilon = 1e-15);
    }
}
