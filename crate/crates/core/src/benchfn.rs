//! Benchmark functions with known moments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::UnivariateFamily;
use crate::sampling::Law;

/// `sin x1 + a sin^2 x2 + b x3^4 sin x1`.
pub fn ishigami(x: &[f64], a: f64, b: f64) -> f64 {
    x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
}

/// `sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`.
pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| {
            let t = w[1] - w[0] * w[0];
            100.0 * t * t + (1.0 - w[0]) * (1.0 - w[0])
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Benchmark {
    Ishigami { a: f64, b: f64 },
    Rosenbrock { dim: usize },
    Constant { value: f64, dim: usize },
}

/// Analytic mean, variance and first-order indices where known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub sobol: Option<Vec<f64>>,
}

impl Benchmark {
    pub fn ishigami_default() -> Self {
        Benchmark::Ishigami { a: 7.0, b: 0.1 }
    }

    pub fn rosenbrock_default() -> Self {
        Benchmark::Rosenbrock { dim: 10 }
    }

    /// `ishigami`, `rosenbrock` or `constant`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ishigami" => Ok(Self::ishigami_default()),
            "rosenbrock" => Ok(Self::rosenbrock_default()),
            "constant" => Ok(Benchmark::Constant { value: 1.0, dim: 1 }),
            _ => Err(Error::invalid(format!("unknown function '{name}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Ishigami { .. } => "ishigami",
            Benchmark::Rosenbrock { .. } => "rosenbrock",
            Benchmark::Constant { .. } => "constant",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Benchmark::Ishigami { .. } => 3,
            Benchmark::Rosenbrock { dim } | Benchmark::Constant { dim, .. } => *dim,
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let b = match self {
            Benchmark::Ishigami { .. } => (-PI, PI),
            Benchmark::Rosenbrock { .. } => (-2.0, 2.0),
            Benchmark::Constant { .. } => (-1.0, 1.0),
        };
        vec![b; self.dim()]
    }

    /// Inputs are uniform on [`Self::bounds`].
    pub fn default_law(&self) -> Law {
        Law::LhsMaximin { candidates: 100 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Ishigami { a, b } => ishigami(x, *a, *b),
            Benchmark::Rosenbrock { .. } => rosenbrock(x),
            Benchmark::Constant { value, .. } => *value,
        }
    }

    pub fn references(&self) -> References {
        match *self {
            Benchmark::Ishigami { a, b } => {
                let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
                let v2 = a * a / 8.0;
                let var = ishigami_variance(a, b);
                References {
                    mean: Some(a / 2.0),
                    variance: Some(var),
                    sobol: Some(vec![v1 / var, v2 / var, 0.0]),
                }
            }
            Benchmark::Rosenbrock { dim } => {
                // E[x^2] = 4/3 and E[x^4] = 16/5 under U(-2, 2).
                let term = 100.0 * (4.0 / 3.0 + 16.0 / 5.0) + 7.0 / 3.0;
                References {
                    mean: Some(dim.saturating_sub(1) as f64 * term),
                    variance: None,
                    sobol: None,
                }
            }
            Benchmark::Constant { value, .. } => References {
                mean: Some(value),
                variance: Some(0.0),
                sobol: None,
            },
        }
    }
}

/// `1/2 + a^2/8 + b pi^4/5 + b^2 pi^8/18`.
pub fn ishigami_variance(a: f64, b: f64) -> f64 {
    0.5 + a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0
}

/// Mean and variance by quadrature with `q` Lobatto nodes per variable.
///
/// The Ishigami function is integrated on the full tensor grid. For
/// Rosenbrock, `E[F^2]` is assembled from the pairwise products of its
/// summands, each integrated over the at most four variables it involves;
/// with `q >= 6` the result is exact.
pub fn moment_oracle(f: &Benchmark, q: usize) -> Result<(f64, f64)> {
    match f {
        Benchmark::Constant { value, .. } => Ok((*value, 0.0)),
        Benchmark::Ishigami { .. } => {
            let (lo, hi) = f.bounds()[0];
            let rule = UnivariateFamily::legendre(lo, hi)?.lobatto_rule(q)?;
            let (mut m1, mut m2) = (0.0, 0.0);
            for (x1, w1) in rule.nodes.iter().zip(&rule.weights) {
                for (x2, w2) in rule.nodes.iter().zip(&rule.weights) {
                    for (x3, w3) in rule.nodes.iter().zip(&rule.weights) {
                        let v = f.eval(&[*x1, *x2, *x3]);
                        let w = w1 * w2 * w3;
                        m1 += w * v;
                        m2 += w * v * v;
                    }
                }
            }
            Ok((m1, m2 - m1 * m1))
        }
        Benchmark::Rosenbrock { dim } => {
            let rule = UnivariateFamily::legendre(-2.0, 2.0)?.lobatto_rule(q)?;
            let terms = dim.saturating_sub(1);
            let term = |x: f64, y: f64| 100.0 * (y - x * x).powi(2) + (1.0 - x).powi(2);
            let mut e1 = 0.0;
            for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
                    e1 += wx * wy * term(*x, *y);
                }
            }
            // E[T_i^2] over two variables.
            let mut e_sq = 0.0;
            for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
                    e_sq += wx * wy * term(*x, *y).powi(2);
                }
            }
            // E[T_i T_{i+1}] over three variables.
            let mut e_adj = 0.0;
            for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
                    for (z, wz) in rule.nodes.iter().zip(&rule.weights) {
                        e_adj += wx * wy * wz * term(*x, *y) * term(*y, *z);
                    }
                }
            }
            let mean = terms as f64 * e1;
            let mut second = terms as f64 * e_sq;
            let adjacent = terms.saturating_sub(1) as f64;
            second += 2.0 * adjacent * e_adj;
            let far_pairs = (terms * terms.saturating_sub(1)) as f64 - 2.0 * adjacent;
            second += far_pairs * e1 * e1;
            Ok((mean, second - mean * mean))
        }
    }
}
