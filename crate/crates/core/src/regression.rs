//! Kernel ridge regression: `G(x) = K(x, X) (K(X, X) + lambda I)^-1 Y`, with
//! the posterior variance and the RKHS norm of the interpolant.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::linalg::{Cholesky, PseudoInverse};

/// Observations `(X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        for p in &x {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite input coordinate"));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite output value"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn into_parts(self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.x, self.y)
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len());
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: self.len(),
                });
            }
            x.push(self.x[r].clone());
            y.push(self.y[r]);
        }
        Self::new(x, y)
    }

    /// Reads a CSV with header `x1,...,xd,y`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let ncol = header.len();
        if ncol < 2 || &header[ncol - 1] != "y" {
            return Err(Error::invalid("dataset header must be x1,...,xd,y"));
        }
        for (j, h) in header.iter().take(ncol - 1).enumerate() {
            if h != format!("x{}", j + 1) {
                return Err(Error::invalid(format!("unexpected column name '{h}'")));
            }
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("row {}: cannot parse '{s}'", row + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            y.push(vals[ncol - 1]);
            x.push(vals[..ncol - 1].to_vec());
        }
        Self::new(x, y)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (p, v) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = p.iter().map(|c| format!("{c:e}")).collect();
            rec.push(format!("{v:e}"));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fall back to an eigendecomposition pseudo-solve when the Cholesky
    /// factorization fails, instead of returning the error.
    pub allow_pseudo_inverse: bool,
}

#[derive(Debug, Clone)]
enum Solver {
    Cholesky(Cholesky),
    Pseudo(PseudoInverse),
}

impl Solver {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Solver::Cholesky(c) => c.solve(b),
            Solver::Pseudo(p) => p.solve(b),
        }
    }

    fn quad_form(&self, b: &[f64]) -> f64 {
        match self {
            Solver::Cholesky(c) => c.quad_form(b),
            Solver::Pseudo(p) => p.quad_form(b),
        }
    }
}

/// A fitted kernel ridge regressor.
#[derive(Debug, Clone)]
pub struct TrainedRegressor {
    kernel: KernelSpec,
    nugget: f64,
    x_train: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    solver: Solver,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kernel: KernelSpec,
    nugget: f64,
    x_train: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

fn factorize(
    kernel: &KernelSpec,
    nugget: f64,
    x: &[Vec<f64>],
    opts: FitOptions,
) -> Result<Solver> {
    let mut a = kernels::gram(kernel, x)?;
    for i in 0..a.nrows() {
        a[(i, i)] += nugget;
    }
    match Cholesky::new(&a) {
        Ok(c) => Ok(Solver::Cholesky(c)),
        Err(e @ Error::Singular { .. }) => {
            if opts.allow_pseudo_inverse {
                Ok(Solver::Pseudo(PseudoInverse::new(&a, 1e-12)))
            } else {
                Err(e)
            }
        }
        Err(e) => Err(e),
    }
}

/// Solves `(K(X, X) + lambda I) alpha = Y`.
pub fn fit(kernel: &KernelSpec, nugget: f64, data: &Dataset, opts: FitOptions) -> Result<TrainedRegressor> {
    if !(nugget >= 0.0) || !nugget.is_finite() {
        return Err(Error::invalid(format!("nugget must be >= 0, got {nugget}")));
    }
    kernel.validate()?;
    let solver = factorize(kernel, nugget, data.x(), opts)?;
    let alpha = solver.solve(data.y());
    Ok(TrainedRegressor {
        kernel: kernel.clone(),
        nugget,
        x_train: data.x().to_vec(),
        alpha,
        solver,
    })
}

impl TrainedRegressor {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn x_train(&self) -> &[Vec<f64>] {
        &self.x_train
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.x_train[0].len()
    }

    /// True when the fit fell back to the pseudo-solve.
    pub fn used_pseudo_inverse(&self) -> bool {
        matches!(self.solver, Solver::Pseudo(_))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.predict_mean_batch(std::slice::from_ref(&x.to_vec()))?[0])
    }

    pub fn predict_mean_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        for x in xs {
            self.check(x)?;
        }
        let kx = kernels::cross(&self.kernel, xs, &self.x_train)?;
        let a = nalgebra::DVector::from_column_slice(&self.alpha);
        Ok((kx * a).as_slice().to_vec())
    }

    pub fn predict_variance(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.predict_variance_batch(std::slice::from_ref(&x.to_vec()))?[0])
    }

    /// `K(x, x) - K(x, X) (K + lambda I)^-1 K(X, x)`, clamped to zero when the
    /// negative part is round-off.
    pub fn predict_variance_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        for x in xs {
            self.check(x)?;
        }
        let kx: DMatrix<f64> = kernels::cross(&self.kernel, xs, &self.x_train)?;
        let diag = kernels::diagonal(&self.kernel, xs)?;
        let mut out = Vec::with_capacity(xs.len());
        for (i, kxx) in diag.into_iter().enumerate() {
            let row: Vec<f64> = kx.row(i).iter().copied().collect();
            let v = kxx - self.solver.quad_form(&row);
            if v >= 0.0 {
                out.push(v);
            } else if v >= -1e-10 * kxx.abs().max(1.0) {
                out.push(0.0);
            } else {
                return Err(Error::Numerical(format!(
                    "negative posterior variance {v:e} at query {i}"
                )));
            }
        }
        Ok(out)
    }

    /// `|Y - K alpha|` on the training data.
    pub fn training_residual(&self, y: &[f64]) -> Result<f64> {
        let pred = self.predict_mean_batch(&self.x_train)?;
        Ok(pred
            .iter()
            .zip(y)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            .sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            kernel: self.kernel.clone(),
            nugget: self.nugget,
            x_train: self.x_train.clone(),
            alpha: self.alpha.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Restores a model; the factorization is recomputed from the stored inputs.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.x_train.is_empty() || file.x_train.len() != file.alpha.len() {
            return Err(Error::invalid("model needs matching x_train and alpha"));
        }
        file.kernel.validate()?;
        let solver = factorize(
            &file.kernel,
            file.nugget,
            &file.x_train,
            FitOptions {
                allow_pseudo_inverse: true,
            },
        )?;
        Ok(Self {
            kernel: file.kernel,
            nugget: file.nugget,
            x_train: file.x_train,
            alpha: file.alpha,
            solver,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&s)
    }
}

/// `Y^T K(X, X)^-1 Y`, the squared RKHS norm of the interpolant.
pub fn rkhs_norm_sq(kernel: &KernelSpec, data: &Dataset) -> Result<f64> {
    let g = kernels::gram(kernel, data.x())?;
    let ch = Cholesky::new(&g)?;
    Ok(ch.quad_form(data.y()))
}
