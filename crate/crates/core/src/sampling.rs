//! Seeded input designs.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`, so a
//! `(spec, seed)` pair gives the same points on every platform.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::regression::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    /// Best of `candidates` Latin hypercubes by minimum pairwise distance.
    LhsMaximin { candidates: usize },
    Uniform,
    /// Beta law of the first kind with shapes `(a_j, b_j)` per dimension.
    Beta { shapes: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    pub law: Law,
    pub seed: u64,
}

/// Minimum pairwise distance of every candidate and the index kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximinReport {
    pub chosen: usize,
    pub min_distances: Vec<f64>,
}

impl DesignSpec {
    pub fn new(n: usize, bounds: Vec<(f64, f64)>, law: Law, seed: u64) -> Result<Self> {
        let s = Self { n, bounds, law, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        if self.bounds.is_empty() {
            return Err(Error::invalid("design needs at least one dimension"));
        }
        for (lo, hi) in &self.bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("bad interval [{lo}, {hi}]")));
            }
        }
        match &self.law {
            Law::LhsMaximin { candidates } if *candidates == 0 => {
                Err(Error::invalid("maximin needs at least one candidate"))
            }
            Law::Beta { shapes } => {
                if shapes.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        found: shapes.len(),
                    });
                }
                if shapes.iter().any(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
                    return Err(Error::invalid("beta shapes must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub fn sample(spec: &DesignSpec) -> Result<Vec<Vec<f64>>> {
    Ok(sample_with_report(spec)?.0)
}

/// Like [`sample`], with the maximin bookkeeping for LHS designs.
pub fn sample_with_report(spec: &DesignSpec) -> Result<(Vec<Vec<f64>>, Option<MaximinReport>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim();
    let n = spec.n;
    let unit = match &spec.law {
        Law::Uniform => (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect(),
        Law::Beta { shapes } => (0..n)
            .map(|_| {
                shapes
                    .iter()
                    .map(|&(a, b)| beta_inverse_cdf(rng.random::<f64>(), a, b))
                    .collect()
            })
            .collect(),
        Law::LhsMaximin { candidates } => {
            let mut best: Option<Vec<Vec<f64>>> = None;
            let mut report = MaximinReport {
                chosen: 0,
                min_distances: Vec::with_capacity(*candidates),
            };
            let mut best_dist = f64::NEG_INFINITY;
            for c in 0..*candidates {
                let design = lhs_unit(n, d, &mut rng);
                let dist = min_pairwise_distance(&design);
                report.min_distances.push(dist);
                if dist > best_dist {
                    best_dist = dist;
                    report.chosen = c;
                    best = Some(design);
                }
            }
            let pts = scale(best.unwrap(), &spec.bounds);
            return Ok((pts, Some(report)));
        }
    };
    Ok((scale(unit, &spec.bounds), None))
}

fn scale(unit: Vec<Vec<f64>>, bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    unit.into_iter()
        .map(|p| {
            p.iter()
                .zip(bounds)
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect()
}

fn lhs_unit(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[j] = ((perm[i] as f64 + u) / n as f64).min(1.0 - f64::EPSILON);
        }
    }
    pts
}

/// Smallest Euclidean distance between two distinct points; infinite for a
/// single point.
pub fn min_pairwise_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d2: f64 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Quantile function of Beta(a, b) on [0, 1] by safeguarded Newton.
pub fn beta_inverse_cdf(u: f64, a: f64, b: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let lb = ln_beta(a, b);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = a / (a + b);
    for _ in 0..200 {
        let f = beta_reg(a, b, x) - u;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - lb;
        let pdf = ln_pdf.exp();
        let mut next = x - f / pdf;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo <= 1e-16 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Shuffled partition into train, validation and test sets. Train and test
/// sizes are rounded from their fractions and validation takes the rest.
pub fn split(data: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Option<Dataset>, Option<Dataset>)> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid("fractions must lie in [0, 1]"));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-3 {
        return Err(Error::invalid(format!(
            "fractions sum to {}, expected 1",
            ft + fv + fs
        )));
    }
    let n = data.len();
    let sizes = split_sizes(n, fractions);
    for (size, frac, name) in [(sizes.0, ft, "train"), (sizes.1, fv, "validation"), (sizes.2, fs, "test")] {
        if frac > 0.0 && size == 0 {
            return Err(Error::invalid(format!("{name} set would be empty")));
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let train = data.select(&idx[..sizes.0])?;
    let part = |r: &[usize]| -> Result<Option<Dataset>> {
        if r.is_empty() {
            Ok(None)
        } else {
            data.select(r).map(Some)
        }
    };
    let val = part(&idx[sizes.0..sizes.0 + sizes.1])?;
    let test = part(&idx[sizes.0 + sizes.1..])?;
    Ok((train, val, test))
}

/// Sizes used by [`split`].
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> (usize, usize, usize) {
    let (ft, fv, fs) = fractions;
    let mut test = ((fs * n as f64).round() as usize).min(n);
    let mut train = ((ft * n as f64).round() as usize).min(n - test);
    if fv == 0.0 {
        if fs == 0.0 {
            test = 0;
        }
        train = n - test;
    }
    if ft == 0.0 {
        train = 0;
    }
    if fs == 0.0 {
        test = 0;
    }
    let val = n - train - test;
    (train, val, test)
}

/// Writes the inputs with header `x1,...,xd`.
pub fn write_design_csv(pts: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    write_design_csv_to(pts, file)
}

pub fn write_design_csv_to<W: std::io::Write>(pts: &[Vec<f64>], writer: W) -> Result<()> {
    let d = pts.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=d).map(|j| format!("x{j}")))?;
    for p in pts {
        w.write_record(p.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
