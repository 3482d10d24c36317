//! Test-set scores, kernel density estimates, KL divergence, pick-freeze
//! Sobol' indices and box-plot statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{self, DesignSpec, Law};

/// Errors on a test set. A metric whose denominator vanishes is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmse: f64,
    pub nrmse: Option<f64>,
    pub q2: Option<f64>,
    /// Maximum relative error in percent.
    pub mre: Option<f64>,
    pub n_test: usize,
}

pub fn score(pred: &[f64], truth: &[f64]) -> Result<ScoreReport> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let n = truth.len();
    if n < 2 {
        return Err(Error::invalid("scoring needs at least two test points"));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_y: f64 = truth.iter().map(|t| t * t).sum();
    let mean = truth.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let mre = if truth.iter().any(|t| *t == 0.0) {
        None
    } else {
        Some(
            pred.iter()
                .zip(truth)
                .map(|(p, t)| (t - p).abs() / t.abs())
                .fold(0.0, f64::max)
                * 100.0,
        )
    };
    Ok(ScoreReport {
        rmse: (ss_res / n as f64).sqrt(),
        nrmse: (ss_y > 0.0).then(|| (ss_res / ss_y).sqrt()),
        q2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        mre,
        n_test: n,
    })
}

fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Silverman's rule `1.06 s n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("bandwidth needs at least two samples"));
    }
    let s = sample_std(samples);
    if !(s > 0.0) {
        return Err(Error::ZeroVariance("samples are all equal".into()));
    }
    Ok(1.06 * s * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate on `grid`. Contributions beyond 8
/// bandwidths are neglected.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("density estimation needs at least two samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(samples)?,
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.0 * h;
    Ok(grid
        .par_iter()
        .map(|&g| {
            let lo = sorted.partition_point(|v| *v < g - reach);
            let hi = sorted.partition_point(|v| *v <= g + reach);
            let s: f64 = sorted[lo..hi]
                .iter()
                .map(|v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            // An empty float sum is -0.0.
            s * norm + 0.0
        })
        .collect())
}

/// Trapezoid integral over a grid.
pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

const DENSITY_FLOOR: f64 = 1e-12;

/// `int p log(p / q)` by the trapezoid rule, densities floored at `1e-12`,
/// clamped at zero.
pub fn kl_divergence(grid: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != grid.len() || q.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: if p.len() != grid.len() { p.len() } else { q.len() },
        });
    }
    let integrand: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let a = a.max(DENSITY_FLOOR);
            let b = b.max(DENSITY_FLOOR);
            a * (a / b).ln()
        })
        .collect();
    Ok(trapezoid(grid, &integrand).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub divergence: f64,
}

pub const KL_GRID_POINTS: usize = 2048;

/// `D_KL(p || q)` between the densities of two samples, estimated on a
/// common grid over both ranges padded by four bandwidths.
pub fn kl_from_samples(p_samples: &[f64], q_samples: &[f64]) -> Result<KlEstimate> {
    let hp = silverman_bandwidth(p_samples)?;
    let hq = silverman_bandwidth(q_samples)?;
    let pad = 4.0 * hp.max(hq);
    let lo = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::INFINITY, f64::min)
        - pad;
    let hi = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        + pad;
    let step = (hi - lo) / (KL_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KL_GRID_POINTS).map(|i| lo + i as f64 * step).collect();
    let p = kde(p_samples, &grid, Some(hp))?;
    let q = kde(q_samples, &grid, Some(hq))?;
    let divergence = kl_divergence(&grid, &p, &q)?;
    Ok(KlEstimate {
        grid,
        p,
        q,
        divergence,
    })
}

/// First-order Sobol' indices by the centered pick-freeze estimator with
/// `d + 1` input matrices of `n` rows. LHS laws are replaced by i.i.d.
/// uniform draws.
pub fn pick_freeze_sobol<F>(model: F, bounds: &[(f64, f64)], law: &Law, n: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let d = bounds.len();
    let law = match law {
        Law::LhsMaximin { .. } => Law::Uniform,
        other => other.clone(),
    };
    let mut spec = DesignSpec::new(n, bounds.to_vec(), law, 0)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    spec.seed = rand::Rng::random(&mut seeder);
    let a = sampling::sample(&spec)?;
    spec.seed = rand::Rng::random(&mut seeder);
    let b = sampling::sample(&spec)?;
    let eval = |pts: &[Vec<f64>], matrix: usize| -> Result<Vec<f64>> {
        pts.par_iter()
            .enumerate()
            .map(|(row, x)| {
                let v = model(x).map_err(|e| Error::Evaluation {
                    matrix,
                    row,
                    message: e.to_string(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation {
                        matrix,
                        row,
                        message: format!("non-finite output {v}"),
                    })
                }
            })
            .collect()
    };
    let ya = eval(&a, 0)?;
    let nf = n as f64;
    let mean_a = ya.iter().sum::<f64>() / nf;
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let frozen: Vec<Vec<f64>> = b
            .iter()
            .zip(&a)
            .map(|(pb, pa)| {
                let mut p = pb.clone();
                p[i] = pa[i];
                p
            })
            .collect();
        let yi = eval(&frozen, i + 1)?;
        let mean_i = yi.iter().sum::<f64>() / nf;
        let m = 0.5 * (mean_a + mean_i);
        let cross = ya.iter().zip(&yi).map(|(u, v)| (u - m) * (v - m)).sum::<f64>() / nf;
        let var = ya
            .iter()
            .zip(&yi)
            .map(|(u, v)| 0.5 * ((u - m) * (u - m) + (v - m) * (v - m)))
            .sum::<f64>()
            / nf;
        if !(var > 0.0) {
            return Err(Error::ZeroVariance("model output is constant".into()));
        }
        out.push(cross / var);
    }
    Ok(out)
}

/// Box-plot summary with type-7 quartiles and the 1.5 IQR outlier rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Most extreme values inside the fences.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid("box statistics need at least one value"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN value"));
    }
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q25 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q75 = quantile_sorted(&s, 0.75);
    let iqr = q75 - q25;
    let (flo, fhi) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().cloned().filter(|v| *v >= flo && *v <= fhi).collect();
    Ok(BoxStats {
        median,
        q25,
        q75,
        whisker_lo: inside.first().cloned().unwrap_or(median),
        whisker_hi: inside.last().cloned().unwrap_or(median),
        outliers: s.into_iter().filter(|v| *v < flo || *v > fhi).collect(),
    })
}
