//! Python bindings. Vectors cross the boundary as lists of floats and
//! point sets as lists of lists.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use skrr_core::experiment::{self, ExperimentConfig};
use skrr_core::gpc::{self, Provenance};
use skrr_core::kernelflow::{self, KfConfig, KfFamily};
use skrr_core::kernels::{self, KernelSpec};
use skrr_core::polybasis::{self, QuadratureRule, UnivariateFamily};
use skrr_core::regression::{self, Dataset, FitOptions};
use skrr_core::sampling::{self, DesignSpec, Law};
use skrr_core::sparse::{self, BpdnOptions};
use skrr_core::{benchfn, metrics, skrr as core_skrr, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::Unsupported(_)
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn family(lo: f64, hi: f64, beta: Option<(f64, f64)>) -> PyResult<UnivariateFamily> {
    match beta {
        Some((a, b)) => UnivariateFamily::jacobi_beta(lo, hi, a, b),
        None => UnivariateFamily::legendre(lo, hi),
    }
    .map_err(err)
}

/// Orthonormal polynomial basis of total order `p`.
#[pyclass(name = "TensorBasis", frozen)]
struct PyTensorBasis {
    inner: polybasis::TensorBasis,
}

#[pymethods]
impl PyTensorBasis {
    /// Legendre on `[lo, hi]^d`, or Jacobi for a Beta law when `beta=(a, b)`.
    #[new]
    #[pyo3(signature = (d, p, lo=-1.0, hi=1.0, beta=None))]
    fn new(d: usize, p: usize, lo: f64, hi: f64, beta: Option<(f64, f64)>) -> PyResult<Self> {
        let inner = polybasis::TensorBasis::isotropic(family(lo, hi, beta)?, d, p).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn multi_indices(&self) -> Vec<Vec<usize>> {
        self.inner.multi_indices().iter().map(<[usize]>::to_vec).collect()
    }

    fn eval(&self, k: usize, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(k, &x).map_err(err)
    }

    fn eval_all(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval_all(&x).map_err(err)
    }

    /// Tensor quadrature nodes and weights with `q` Lobatto nodes per dimension.
    fn quadrature(&self, q: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let rule = QuadratureRule::tensor(&self.inner, &vec![q; self.inner.dim()]).map_err(err)?;
        Ok(rule.iter().unzip())
    }

    fn orthonormality_defect(&self, q: usize) -> PyResult<f64> {
        let rule = QuadratureRule::tensor(&self.inner, &vec![q; self.inner.dim()]).map_err(err)?;
        polybasis::orthonormality_defect(&self.inner, &rule).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("TensorBasis(d={}, p={}, len={})", self.inner.dim(), self.inner.order(), self.inner.len())
    }
}

/// Lobatto nodes and probability weights on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (q, lo=-1.0, hi=1.0, beta=None))]
fn lobatto_rule(q: usize, lo: f64, hi: f64, beta: Option<(f64, f64)>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = family(lo, hi, beta)?.lobatto_rule(q).map_err(err)?;
    Ok((r.nodes, r.weights))
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn gaussian(gamma: f64) -> PyResult<Self> {
        KernelSpec::gaussian(gamma).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn gaussian_ard(gammas: Vec<f64>) -> PyResult<Self> {
        KernelSpec::gaussian_ard(gammas).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn matern(gamma: f64, nu: f64) -> PyResult<Self> {
        KernelSpec::matern(gamma, nu).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn rational_quadratic(alpha: f64, gamma: f64) -> PyResult<Self> {
        KernelSpec::rational_quadratic(alpha, gamma).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn polynomial(offset: f64, exponent: u32) -> PyResult<Self> {
        KernelSpec::polynomial(offset, exponent).map(|inner| Self { inner }).map_err(err)
    }

    /// `sum_k sigma_k phi_k(x) phi_k(y)` over the `retained` basis indices.
    #[staticmethod]
    fn spectral(basis: &PyTensorBasis, retained: Vec<usize>, sigmas: Vec<f64>) -> PyResult<Self> {
        kernels::spectral_kernel(&basis.inner, &retained, &sigmas)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner: KernelSpec = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __call__(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        kernels::kernel_eval(&self.inner, &x, &y).map_err(err)
    }

    fn gram(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let g = kernels::gram(&self.inner, &xs).map_err(err)?;
        Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// Kernel ridge regressor.
#[pyclass(name = "Regressor", frozen)]
struct PyRegressor {
    inner: regression::TrainedRegressor,
}

#[pymethods]
impl PyRegressor {
    #[new]
    fn new(kernel: &PyKernel, nugget: f64, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let data = Dataset::new(x, y).map_err(err)?;
        let inner = regression::fit(&kernel.inner, nugget, &data, FitOptions::default()).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn nugget(&self) -> f64 {
        self.inner.nugget()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    fn predict(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_mean_batch(&xs).map_err(err)
    }

    fn variance(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_variance_batch(&xs).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        regression::TrainedRegressor::from_json(s).map(|inner| Self { inner }).map_err(err)
    }
}

#[pyclass(name = "GpcSurrogate", frozen)]
struct PyGpc {
    inner: gpc::GpcSurrogate,
}

#[pymethods]
impl PyGpc {
    #[new]
    fn new(basis: &PyTensorBasis, coeffs: Vec<f64>) -> PyResult<Self> {
        gpc::GpcSurrogate::new(basis.inner.clone(), coeffs, Provenance::Bpdn)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    /// Projection from target values at the nodes of `basis.quadrature(q)`.
    #[staticmethod]
    fn from_quadrature(basis: &PyTensorBasis, q: usize, values: Vec<f64>) -> PyResult<Self> {
        let rule = QuadratureRule::tensor(&basis.inner, &vec![q; basis.inner.dim()]).map_err(err)?;
        gpc::project_values(&basis.inner, &rule, &values)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    fn predict(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.eval_batch(&xs).map_err(err)
    }

    /// `(mean, variance)` read off the coefficients.
    fn moments(&self) -> (f64, f64) {
        self.inner.moments()
    }

    fn sobol_main(&self) -> PyResult<Vec<f64>> {
        self.inner.sobol_main().map_err(err)
    }
}

/// Basis pursuit denoising `min |c|_1 s.t. |A c - y|_2 <= eta`.
#[pyfunction]
fn bpdn(py: Python<'_>, a: Vec<Vec<f64>>, y: Vec<f64>, eta: f64) -> PyResult<Py<PyDict>> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if a.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    let m = nalgebra_from_rows(rows, cols, &a);
    let sol = sparse::bpdn_solve(&m, &y, eta, &BpdnOptions::default()).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("c", sol.c)?;
    d.set_item("residual", sol.residual_l2)?;
    d.set_item("l1", sol.l1)?;
    d.set_item("iterations", sol.iterations)?;
    Ok(d.unbind())
}

fn nalgebra_from_rows(rows: usize, cols: usize, a: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| a[i][j])
}

/// Measurement matrix `phi_k(x_i)`.
#[pyfunction]
fn build_theta(basis: &PyTensorBasis, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let t = sparse::build_theta(&basis.inner, &xs).map_err(err)?;
    Ok(t.matrix().row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn sparsity(c: Vec<f64>, delta: f64) -> usize {
    sparse::sparsity(&c, delta)
}

/// Eigenvalues `kappa |c_k| / sum |c|` minimizing the RKHS norm.
#[pyfunction]
#[pyo3(signature = (c, kappa, eps_drop=None))]
fn optimal_sigmas(c: Vec<f64>, kappa: f64, eps_drop: Option<f64>) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let s = core_skrr::optimal_sigmas(&c, kappa, eps_drop).map_err(err)?;
    Ok((s.retained, s.sigmas))
}

/// Sparse spectral KRR; returns the regressor and a dict with the BPDN
/// coefficients and the retained eigenvalues.
#[pyfunction]
#[pyo3(signature = (basis, x, y, eta, nugget, kappa=None))]
fn sskrr_fit(
    py: Python<'_>,
    basis: &PyTensorBasis,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    eta: f64,
    nugget: f64,
    kappa: Option<f64>,
) -> PyResult<(PyRegressor, Py<PyDict>)> {
    let data = Dataset::new(x, y).map_err(err)?;
    let opts = core_skrr::SskrrOptions {
        kappa,
        ..Default::default()
    };
    let fit = py
        .detach(|| core_skrr::sskrr_fit(&basis.inner, &data, eta, nugget, &opts))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("coeffs", fit.sparse.c.clone())?;
    d.set_item("retained", fit.spectral.retained.clone())?;
    d.set_item("sigmas", fit.spectral.sigmas.clone())?;
    d.set_item("kappa", fit.spectral.kappa)?;
    Ok((PyRegressor { inner: fit.regressor }, d.unbind()))
}

/// Kernel flow on a Gaussian ARD kernel with the nugget; returns
/// `theta_star` (length scales then nugget) and the per-iteration records.
#[pyfunction]
#[pyo3(signature = (x_train, y_train, x_val, y_val, iterations=100, learning_rate=0.1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn kernel_flow(
    py: Python<'_>,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    x_val: Vec<Vec<f64>>,
    y_val: Vec<f64>,
    iterations: usize,
    learning_rate: f64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let train = Dataset::new(x_train, y_train).map_err(err)?;
    let val = Dataset::new(x_val, y_val).map_err(err)?;
    let family = KfFamily::GaussianArd { dim: train.dim() };
    let theta0 = kernelflow::initial_theta(&family, train.x(), true);
    let cfg = KfConfig {
        iterations,
        learning_rate,
        seed,
        ..KfConfig::default()
    };
    let trace = py
        .detach(|| kernelflow::kf_run(&train, &val, &family, &theta0, &cfg))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("theta_star", trace.theta_star.clone())?;
    d.set_item("selected", trace.selected)?;
    let rho: Vec<Option<f64>> = trace.records.iter().map(|r| r.rho).collect();
    let rmse: Vec<Option<f64>> = trace.records.iter().map(|r| r.validation_rmse).collect();
    d.set_item("rho", rho)?;
    d.set_item("validation_rmse", rmse)?;
    Ok(d.unbind())
}

/// Design of `n` points: law is `lhs_maximin`, `uniform` or `beta`
/// (with `shapes`, one `(a, b)` per dimension).
#[pyfunction]
#[pyo3(signature = (n, bounds, law="lhs_maximin", seed=0, candidates=100, shapes=None))]
fn sample(
    n: usize,
    bounds: Vec<(f64, f64)>,
    law: &str,
    seed: u64,
    candidates: usize,
    shapes: Option<Vec<(f64, f64)>>,
) -> PyResult<Vec<Vec<f64>>> {
    let law = match (law, shapes) {
        ("lhs_maximin", _) => Law::LhsMaximin { candidates },
        ("uniform", _) => Law::Uniform,
        ("beta", Some(shapes)) => Law::Beta { shapes },
        ("beta", None) => return Err(PyValueError::new_err("beta law needs shapes")),
        (other, _) => return Err(PyValueError::new_err(format!("unknown law '{other}'"))),
    };
    let spec = DesignSpec::new(n, bounds, law, seed).map_err(err)?;
    sampling::sample(&spec).map_err(err)
}

/// RMSE, NRMSE, Q2 and MRE of predictions against truth.
#[pyfunction]
fn score(py: Python<'_>, pred: Vec<f64>, truth: Vec<f64>) -> PyResult<Py<PyDict>> {
    let s = metrics::score(&pred, &truth).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("rmse", s.rmse)?;
    d.set_item("nrmse", s.nrmse)?;
    d.set_item("q2", s.q2)?;
    d.set_item("mre", s.mre)?;
    d.set_item("n_test", s.n_test)?;
    Ok(d.unbind())
}

#[pyfunction]
#[pyo3(signature = (samples, grid, bandwidth=None))]
fn kde(samples: Vec<f64>, grid: Vec<f64>, bandwidth: Option<f64>) -> PyResult<Vec<f64>> {
    metrics::kde(&samples, &grid, bandwidth).map_err(err)
}

#[pyfunction]
fn kl_divergence(grid: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    metrics::kl_divergence(&grid, &p, &q).map_err(err)
}

/// `KL(p || q)` between kernel density estimates of two samples.
#[pyfunction]
fn kl_from_samples(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    metrics::kl_from_samples(&p, &q).map(|e| e.divergence).map_err(err)
}

#[pyfunction]
fn box_stats(py: Python<'_>, values: Vec<f64>) -> PyResult<Py<PyDict>> {
    let b = metrics::box_stats(&values).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("median", b.median)?;
    d.set_item("q25", b.q25)?;
    d.set_item("q75", b.q75)?;
    d.set_item("whisker_lo", b.whisker_lo)?;
    d.set_item("whisker_hi", b.whisker_hi)?;
    d.set_item("outliers", b.outliers)?;
    Ok(d.unbind())
}

#[pyfunction]
#[pyo3(signature = (x, a=7.0, b=0.1))]
fn ishigami(x: Vec<f64>, a: f64, b: f64) -> PyResult<f64> {
    if x.len() != 3 {
        return Err(PyValueError::new_err("ishigami takes 3 inputs"));
    }
    Ok(benchfn::ishigami(&x, a, b))
}

#[pyfunction]
fn rosenbrock(x: Vec<f64>) -> f64 {
    benchfn::rosenbrock(&x)
}

/// Runs an experiment from its JSON config and returns the report JSON.
/// When `output_dir` is given the report files are written there too.
#[pyfunction]
#[pyo3(signature = (config_json, output_dir=None))]
fn run_experiment(py: Python<'_>, config_json: &str, output_dir: Option<String>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    py.detach(|| {
        let (report, artifacts) = experiment::run_experiment(&cfg)?;
        if let Some(dir) = &output_dir {
            experiment::report_render(&report, &artifacts, dir)?;
        }
        report.to_json()
    })
    .map_err(err)
}

#[pymodule]
fn skrr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTensorBasis>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyRegressor>()?;
    m.add_class::<PyGpc>()?;
    m.add_function(wrap_pyfunction!(lobatto_rule, m)?)?;
    m.add_function(wrap_pyfunction!(bpdn, m)?)?;
    m.add_function(wrap_pyfunction!(build_theta, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_sigmas, m)?)?;
    m.add_function(wrap_pyfunction!(sskrr_fit, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_flow, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(kde, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(kl_from_samples, m)?)?;
    m.add_function(wrap_pyfunction!(box_stats, m)?)?;
    m.add_function(wrap_pyfunction!(ishigami, m)?)?;
    m.add_function(wrap_pyfunction!(rosenbrock, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
