//! Experiment harness: replicated surrogate fits on benchmark functions or
//! CSV datasets, scored on held-out data and rendered to JSON/CSV files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchfn::{Benchmark, References};
use crate::error::{Error, Result};
use crate::gpc::{self, GpcSurrogate};
use crate::kernelflow::{self, KfConfig, KfFamily, KfTrace};
use crate::kernels::{spectral_kernel, KernelSpec};
use crate::metrics::{self, BoxStats, ScoreReport};
use crate::polybasis::{lobatto_nodes_for_degree, QuadratureRule, TensorBasis, UnivariateFamily};
use crate::regression::{self, Dataset, FitOptions, TrainedRegressor};
use crate::sampling::{self, DesignSpec, Law};
use crate::skrr::{self, NskrrOptions};
use crate::sparse::{self, BpdnOptions, SparseCoefficients};

pub const RNG_ID: &str = "chacha8";
pub const CONFIG_SCHEMA: &str = include_str!("../schemas/experiment_config.schema.json");
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullGpc,
    SparseGpc,
    KrrKf,
    Sskrr,
    Nskrr,
}

impl Method {
    /// The set run by `method = "all"`.
    pub const ALL: [Method; 4] = [Method::FullGpc, Method::SparseGpc, Method::KrrKf, Method::Sskrr];

    pub fn name(self) -> &'static str {
        match self {
            Method::FullGpc => "full_gpc",
            Method::SparseGpc => "sparse_gpc",
            Method::KrrKf => "krr_kf",
            Method::Sskrr => "sskrr",
            Method::Nskrr => "nskrr",
        }
    }

    fn needs_basis(self) -> bool {
        !matches!(self, Method::KrrKf)
    }

    fn needs_eta(self) -> bool {
        matches!(self, Method::SparseGpc | Method::Sskrr)
    }

    fn is_kernel(self) -> bool {
        matches!(self, Method::KrrKf | Method::Sskrr | Method::Nskrr)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_gpc" => Ok(Method::FullGpc),
            "sparse_gpc" => Ok(Method::SparseGpc),
            "krr_kf" => Ok(Method::KrrKf),
            "sskrr" => Ok(Method::Sskrr),
            "nskrr" => Ok(Method::Nskrr),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

/// `"all"`, a single method name, a comma list, or a JSON array of names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodChoice {
    Name(String),
    List(Vec<Method>),
}

impl MethodChoice {
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = match self {
            MethodChoice::List(v) => v.clone(),
            MethodChoice::Name(s) if s.trim() == "all" => Method::ALL.to_vec(),
            MethodChoice::Name(s) => s
                .split(',')
                .map(|m| m.trim().parse())
                .collect::<Result<Vec<_>>>()?,
        };
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("no method selected"));
        }
        Ok(out)
    }
}

impl Default for MethodChoice {
    fn default() -> Self {
        MethodChoice::Name("all".into())
    }
}

/// A named benchmark with default parameters, or a full description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionChoice {
    Name(String),
    Spec(Benchmark),
}

impl FunctionChoice {
    pub fn benchmark(&self) -> Result<Benchmark> {
        match self {
            FunctionChoice::Name(n) => Benchmark::from_name(n),
            FunctionChoice::Spec(b) => Ok(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyConfig {
    Legendre,
    JacobiBeta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub p: usize,
    #[serde(default = "legendre")]
    pub family: FamilyConfig,
    /// Per-dimension support; defaults to the benchmark domain or the
    /// range of the dataset inputs.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

fn legendre() -> FamilyConfig {
    FamilyConfig::Legendre
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaConfig {
    Fixed {
        value: f64,
    },
    Grid {
        #[serde(default = "grid_lo")]
        lo: f64,
        #[serde(default = "grid_hi")]
        hi: f64,
        #[serde(default = "grid_points")]
        points: usize,
    },
    Kf {
        #[serde(default = "kf_lambda0")]
        lambda0: f64,
        #[serde(default = "kf_iterations")]
        iterations: usize,
        #[serde(default = "kf_rate")]
        learning_rate: f64,
    },
}

fn grid_lo() -> f64 {
    1e-12
}
fn grid_hi() -> f64 {
    1e-1
}
fn grid_points() -> usize {
    45
}
fn kf_lambda0() -> f64 {
    1e-6
}
fn kf_iterations() -> usize {
    50
}
fn kf_rate() -> f64 {
    0.5
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig::Grid {
            lo: grid_lo(),
            hi: grid_hi(),
            points: grid_points(),
        }
    }
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaConfig::Fixed { value } if !(value >= 0.0 && value.is_finite()) => {
                Err(Error::invalid("fixed nugget must be finite and >= 0"))
            }
            LambdaConfig::Grid { lo, hi, points } if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 => {
                Err(Error::invalid("nugget grid needs 0 < lo <= hi and at least one point"))
            }
            LambdaConfig::Kf { lambda0, learning_rate, .. } if !(lambda0 > 0.0 && learning_rate >= 0.0) => {
                Err(Error::invalid("kf nugget tuning needs lambda0 > 0 and a learning rate >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// The log-spaced grid, smallest nugget first.
    pub fn grid(&self) -> Vec<f64> {
        match *self {
            LambdaConfig::Grid { lo, hi, points } => log_grid(lo, hi, points),
            _ => Vec::new(),
        }
    }
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NskrrConfig {
    pub iterations: usize,
    /// Lobatto nodes per dimension; defaults to exactness `2p`.
    pub nodes: Option<usize>,
}

impl Default for NskrrConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            nodes: None,
        }
    }
}

fn default_krr_kf() -> KfConfig {
    KfConfig {
        learning_rate: 0.1,
        iterations: 100,
        ..KfConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Train/validation/test fractions in dataset mode.
    pub split: (f64, f64, f64),
    pub method: MethodChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisConfig>,
    /// Law of the training design; defaults to the benchmark's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Law>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub lambda: LambdaConfig,
    /// Spectral trace; `None` uses the training output variance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Sparsity threshold.
    pub delta: f64,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Tune on the test set instead of the validation set.
    pub paper_leakage: bool,
    /// Lobatto nodes per dimension for full gPC; defaults to exactness `2p`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_gpc_nodes: Option<usize>,
    pub krr_kf: KfConfig,
    pub nskrr: NskrrConfig,
    pub bpdn: BpdnOptions,
    /// Pick-freeze sample size for kernel surrogates; `None` skips them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sobol_samples: Option<usize>,
    pub kl: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            function: None,
            dataset: None,
            split: (0.67, 0.12, 0.21),
            method: MethodChoice::default(),
            basis: None,
            sampling: None,
            n_train: 100,
            n_val: 100,
            n_test: 10_000,
            eta: None,
            lambda: LambdaConfig::default(),
            kappa: None,
            delta: 1e-3,
            seeds: Vec::new(),
            output_dir: None,
            paper_leakage: false,
            full_gpc_nodes: None,
            krr_kf: default_krr_kf(),
            nskrr: NskrrConfig::default(),
            bpdn: BpdnOptions::default(),
            sobol_samples: None,
            kl: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.method.methods()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list is empty"));
        }
        match (&self.function, &self.dataset) {
            (Some(f), None) => {
                f.benchmark()?;
            }
            (None, Some(_)) => {
                let (a, b, c) = self.split;
                if [a, b, c].iter().any(|v| !(*v >= 0.0)) || a <= 0.0 || (a + b + c - 1.0).abs() > 1e-3 {
                    return Err(Error::invalid("split fractions must be >= 0, sum to 1, with a positive train share"));
                }
            }
            _ => return Err(Error::invalid("exactly one of 'function' and 'dataset' must be given")),
        }
        let methods = self.methods()?;
        for m in &methods {
            if m.needs_basis() && self.basis.is_none() {
                return Err(Error::invalid(format!("method {m} requires 'basis'")));
            }
            if m.needs_eta() && self.eta.is_none() {
                return Err(Error::invalid(format!("method {m} requires 'eta'")));
            }
            if *m == Method::FullGpc && self.function.is_none() {
                return Err(Error::invalid("full_gpc needs a benchmark function to evaluate at quadrature nodes"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::invalid("eta must be finite and >= 0"));
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::invalid("kappa must be finite and > 0"));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("delta must be >= 0"));
        }
        self.lambda.validate()?;
        if self.function.is_some() {
            if self.n_train < 2 || self.n_test == 0 {
                return Err(Error::invalid("need n_train >= 2 and n_test >= 1"));
            }
            let tunes = methods.iter().any(|m| {
                *m == Method::KrrKf || (m.is_kernel() && !matches!(self.lambda, LambdaConfig::Fixed { .. }))
            });
            if tunes && !self.paper_leakage && self.n_val == 0 {
                return Err(Error::invalid("tuning needs a validation set: n_val must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunStatus {
    Ok,
    Failed { message: String },
}

/// Outcome of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodRun {
    pub seed: u64,
    pub method: Method,
    pub status: RunStatus,
    pub score: Option<ScoreReport>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub sparsity: Option<usize>,
    pub sobol: Option<Vec<f64>>,
    pub kl: Option<f64>,
    pub lambda: Option<f64>,
    /// Kernel flow parameters, nugget last.
    pub theta: Option<Vec<f64>>,
}

impl MethodRun {
    fn failed(seed: u64, method: Method, e: &Error) -> Self {
        Self {
            seed,
            method,
            status: RunStatus::Failed { message: e.to_string() },
            score: None,
            mean: None,
            variance: None,
            sparsity: None,
            sobol: None,
            kl: None,
            lambda: None,
            theta: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Scalar metrics by name, in report column order.
    pub fn metric_values(&self) -> Vec<(String, Option<f64>)> {
        let s = self.score.as_ref();
        let mut out = vec![
            ("rmse".to_string(), s.map(|s| s.rmse)),
            ("nrmse".to_string(), s.and_then(|s| s.nrmse)),
            ("q2".to_string(), s.and_then(|s| s.q2)),
            ("mre".to_string(), s.and_then(|s| s.mre)),
            ("mean".to_string(), self.mean),
            ("variance".to_string(), self.variance),
            ("sparsity".to_string(), self.sparsity.map(|v| v as f64)),
            ("kl".to_string(), self.kl),
            ("lambda".to_string(), self.lambda),
        ];
        if let Some(sob) = &self.sobol {
            for (j, v) in sob.iter().enumerate() {
                out.push((format!("sobol_{}", j + 1), Some(*v)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateRow {
    pub method: Method,
    pub metric: String,
    pub count: usize,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub version: String,
    pub rng: String,
    /// Seconds since the Unix epoch; not covered by determinism.
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub references: Option<References>,
    pub partial: bool,
    pub runs: Vec<MethodRun>,
    pub aggregates: Vec<AggregateRow>,
}

/// Box statistics of every metric over the successful runs of each method.
pub fn aggregate(runs: &[MethodRun]) -> Result<Vec<AggregateRow>> {
    let mut cols: BTreeMap<(Method, String), Vec<f64>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.is_ok()) {
        for (name, v) in r.metric_values() {
            if let Some(v) = v.filter(|v| v.is_finite()) {
                cols.entry((r.method, name)).or_default().push(v);
            }
        }
    }
    let mut rows = Vec::with_capacity(cols.len());
    for ((method, metric), vals) in cols {
        rows.push(AggregateRow {
            method,
            metric,
            count: vals.len(),
            stats: metrics::box_stats(&vals)?,
        });
    }
    Ok(rows)
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks the structure and the aggregate consistency.
    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.check()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&s)
    }

    /// Parses without the consistency checks, for re-aggregation.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn check(&self) -> Result<()> {
        if self.version.is_empty() || self.rng.is_empty() {
            return Err(Error::invalid("report lacks version or rng identifiers"));
        }
        self.config.validate()?;
        let methods = self.config.methods()?;
        for r in &self.runs {
            if !self.config.seeds.contains(&r.seed) || !methods.contains(&r.method) {
                return Err(Error::invalid(format!(
                    "run ({}, {}) is not part of the configured experiment",
                    r.seed, r.method
                )));
            }
            if r.is_ok() && r.score.is_none() {
                return Err(Error::invalid(format!("successful run ({}, {}) has no score", r.seed, r.method)));
            }
        }
        if self.partial != self.runs.iter().any(|r| !r.is_ok()) {
            return Err(Error::invalid("partial flag disagrees with run statuses"));
        }
        let expect = aggregate(&self.runs)?;
        if !aggregates_match(&expect, &self.aggregates) {
            return Err(Error::invalid("aggregates differ from the per-seed entries"));
        }
        Ok(())
    }

    /// Recomputes the aggregates and the partial flag from the runs.
    pub fn reaggregate(&mut self) -> Result<()> {
        self.partial = self.runs.iter().any(|r| !r.is_ok());
        self.aggregates = aggregate(&self.runs)?;
        Ok(())
    }
}

fn aggregates_match(a: &[AggregateRow], b: &[AggregateRow]) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.method == y.method
                && x.metric == y.metric
                && x.count == y.count
                && close(x.stats.median, y.stats.median)
                && close(x.stats.q25, y.stats.q25)
                && close(x.stats.q75, y.stats.q75)
                && close(x.stats.whisker_lo, y.stats.whisker_lo)
                && close(x.stats.whisker_hi, y.stats.whisker_hi)
                && x.stats.outliers.len() == y.stats.outliers.len()
                && x.stats.outliers.iter().zip(&y.stats.outliers).all(|(u, v)| close(*u, *v))
        })
}

/// Plot data that stays out of `report.json`.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub coefficients: Vec<CoefficientDump>,
    pub densities: Vec<DensityDump>,
    pub kf_traces: Vec<TraceDump>,
}

#[derive(Debug, Clone)]
pub struct CoefficientDump {
    pub method: Method,
    pub seed: u64,
    pub basis: TensorBasis,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DensityDump {
    pub method: Method,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub surrogate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TraceDump {
    pub method: Method,
    pub seed: u64,
    pub trace: KfTrace,
}

/// Nugget selection result.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub lambda: f64,
    /// Grid nuggets with their tuning-set RMSE; `None` where the system
    /// was singular.
    pub curve: Vec<(f64, Option<f64>)>,
    pub trace: Option<KfTrace>,
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / truth.len() as f64).sqrt()
}

/// Picks the nugget of `kernel` by grid search or kernel flow, scoring on
/// `tuning`. Grid ties keep the smallest nugget.
pub fn tune_lambda(
    kernel: &KernelSpec,
    train: &Dataset,
    tuning: &Dataset,
    mode: &LambdaConfig,
    seed: u64,
) -> Result<TuneOutcome> {
    if tuning.is_empty() {
        return Err(Error::invalid("empty tuning set"));
    }
    mode.validate()?;
    match *mode {
        LambdaConfig::Fixed { value } => Ok(TuneOutcome {
            lambda: value,
            curve: Vec::new(),
            trace: None,
        }),
        LambdaConfig::Grid { .. } => {
            let grid = mode.grid();
            let curve: Vec<(f64, Option<f64>)> = grid
                .par_iter()
                .map(|&lam| {
                    let score = regression::fit(kernel, lam, train, FitOptions::default())
                        .and_then(|r| r.predict_mean_batch(tuning.x()))
                        .ok()
                        .map(|p| rmse(&p, tuning.y()))
                        .filter(|v| v.is_finite());
                    (lam, score)
                })
                .collect();
            let mut best: Option<(f64, f64)> = None;
            for &(lam, s) in &curve {
                if let Some(s) = s {
                    if best.is_none_or(|(_, b)| s < b) {
                        best = Some((lam, s));
                    }
                }
            }
            let (lambda, _) = best.ok_or_else(|| Error::Numerical("every grid nugget gave a singular system".into()))?;
            Ok(TuneOutcome {
                lambda,
                curve,
                trace: None,
            })
        }
        LambdaConfig::Kf {
            lambda0,
            iterations,
            learning_rate,
        } => {
            let family = KfFamily::Fixed { kernel: kernel.clone() };
            let cfg = KfConfig {
                iterations,
                learning_rate,
                seed,
                ..KfConfig::default()
            };
            let trace = kernelflow::kf_run(train, tuning, &family, &[lambda0], &cfg)?;
            Ok(TuneOutcome {
                lambda: trace.theta_star[0],
                curve: Vec::new(),
                trace: Some(trace),
            })
        }
    }
}

struct SeedData {
    train: Dataset,
    val: Option<Dataset>,
    test: Dataset,
    kf_seed: u64,
    sobol_seed: u64,
}

struct Context {
    cfg: ExperimentConfig,
    methods: Vec<Method>,
    bench: Option<Benchmark>,
    dataset: Option<Dataset>,
    basis: Option<TensorBasis>,
    bounds: Vec<(f64, f64)>,
}

fn input_bounds(x: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let d = x[0].len();
    (0..d)
        .map(|j| {
            let lo = x.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = x.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect()
}

fn build_basis(cfg: &BasisConfig, default_bounds: &[(f64, f64)]) -> Result<TensorBasis> {
    let bounds = cfg.bounds.clone().unwrap_or_else(|| default_bounds.to_vec());
    if bounds.len() != default_bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: default_bounds.len(),
            found: bounds.len(),
        });
    }
    let families = bounds
        .iter()
        .map(|&(lo, hi)| match cfg.family {
            FamilyConfig::Legendre => UnivariateFamily::legendre(lo, hi),
            FamilyConfig::JacobiBeta { a, b } => UnivariateFamily::jacobi_beta(lo, hi, a, b),
        })
        .collect::<Result<Vec<_>>>()?;
    TensorBasis::new(families, cfg.p)
}

fn derive_seeds(seed: u64) -> [u64; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.random())
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let bench = cfg.function.as_ref().map(|f| f.benchmark()).transpose()?;
        let dataset = cfg.dataset.as_ref().map(Dataset::read_csv).transpose()?;
        let bounds = match (&bench, &dataset) {
            (Some(b), _) => b.bounds(),
            (None, Some(d)) => input_bounds(d.x()),
            (None, None) => unreachable!("validated"),
        };
        let basis = cfg.basis.as_ref().map(|b| build_basis(b, &bounds)).transpose()?;
        Ok(Self {
            cfg: cfg.clone(),
            methods: cfg.methods()?,
            bench,
            dataset,
            basis,
            bounds,
        })
    }

    fn seed_data(&self, seed: u64) -> Result<SeedData> {
        let [train_seed, val_seed, test_seed, kf_seed, sobol_seed] = derive_seeds(seed);
        if let Some(bench) = &self.bench {
            let law = self.cfg.sampling.clone().unwrap_or_else(|| bench.default_law());
            // Held-out points are i.i.d. from the input law.
            let iid = match &law {
                Law::Beta { .. } => law.clone(),
                _ => Law::Uniform,
            };
            let make = |n: usize, law: &Law, s: u64| -> Result<Dataset> {
                let x = sampling::sample(&DesignSpec::new(n, self.bounds.clone(), law.clone(), s)?)?;
                let y = x.iter().map(|p| bench.eval(p)).collect();
                Dataset::new(x, y)
            };
            let train = make(self.cfg.n_train, &law, train_seed)?;
            let val = if self.cfg.n_val > 0 {
                Some(make(self.cfg.n_val, &iid, val_seed)?)
            } else {
                None
            };
            let test = make(self.cfg.n_test, &iid, test_seed)?;
            Ok(SeedData {
                train,
                val,
                test,
                kf_seed,
                sobol_seed,
            })
        } else {
            let data = self.dataset.as_ref().expect("validated");
            let (train, val, test) = sampling::split(data, self.cfg.split, train_seed)?;
            let test = test.ok_or_else(|| Error::invalid("split leaves no test points"))?;
            Ok(SeedData {
                train,
                val,
                test,
                kf_seed,
                sobol_seed,
            })
        }
    }

    fn tuning_set<'a>(&self, data: &'a SeedData) -> Result<&'a Dataset> {
        if self.cfg.paper_leakage {
            Ok(&data.test)
        } else {
            data.val
                .as_ref()
                .ok_or_else(|| Error::invalid("empty tuning set: no validation points"))
        }
    }

    fn law(&self) -> Law {
        match (&self.cfg.sampling, &self.bench) {
            (Some(l), _) => l.clone(),
            (None, Some(b)) => b.default_law(),
            (None, None) => Law::Uniform,
        }
    }
}

struct Fitted {
    run: MethodRun,
    artifacts: Artifacts,
}

/// A fitted surrogate of either kind.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Gpc(GpcSurrogate),
    Kernel(TrainedRegressor),
}

impl Surrogate {
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Surrogate::Gpc(g) => g.eval_batch(xs),
            Surrogate::Kernel(r) => r.predict_mean_batch(xs),
        }
    }

    /// Prediction variance; gPC surrogates have none.
    pub fn variance(&self, xs: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
        match self {
            Surrogate::Gpc(_) => Ok(None),
            Surrogate::Kernel(r) => r.predict_variance_batch(xs).map(Some),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Surrogate::Gpc(g) => g.basis().dim(),
            Surrogate::Kernel(r) => r.dim(),
        }
    }
}

/// A surrogate together with its input domain, as written by `fit`.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub method: Method,
    pub bounds: Vec<(f64, f64)>,
    pub law: Law,
    pub surrogate: Surrogate,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModelFile {
    method: Method,
    bounds: Vec<(f64, f64)>,
    law: Law,
    model: serde_json::Value,
}

impl SavedModel {
    /// First-order Sobol' indices: read off the coefficients for gPC,
    /// pick-freeze with `n` rows for kernel models.
    pub fn sobol(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        match &self.surrogate {
            Surrogate::Gpc(g) => g.sobol_main(),
            Surrogate::Kernel(r) => metrics::pick_freeze_sobol(|x| r.predict_mean(x), &self.bounds, &self.law, n, seed),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let model = match &self.surrogate {
            Surrogate::Gpc(g) => serde_json::to_value(g)?,
            Surrogate::Kernel(r) => serde_json::from_str(&r.to_json()?)?,
        };
        let file = SavedModelFile {
            method: self.method,
            bounds: self.bounds.clone(),
            law: self.law.clone(),
            model,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SavedModelFile = serde_json::from_str(s)?;
        let surrogate = match f.method {
            Method::FullGpc | Method::SparseGpc => Surrogate::Gpc(GpcSurrogate::from_json(&f.model.to_string())?),
            _ => Surrogate::Kernel(TrainedRegressor::from_json(&f.model.to_string())?),
        };
        if f.bounds.len() != surrogate.dim() {
            return Err(Error::DimensionMismatch {
                expected: surrogate.dim(),
                found: f.bounds.len(),
            });
        }
        Ok(Self {
            method: f.method,
            bounds: f.bounds,
            law: f.law,
            surrogate,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()? + "\n").map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&s)
    }
}

/// Fits the single configured method on the dataset or on a benchmark
/// design drawn with `seed`. When the method tunes a nugget or runs kernel
/// flow, the data are split into training and validation parts in the
/// ratio of the first two `split` fractions.
pub fn fit_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<(SavedModel, MethodRun, Artifacts)> {
    let ctx = Context::new(cfg)?;
    let method = match ctx.methods.as_slice() {
        [m] => *m,
        _ => return Err(Error::invalid("fitting needs exactly one method")),
    };
    let data = match &ctx.dataset {
        None => ctx.seed_data(seed)?,
        Some(full) => {
            let [train_seed, _, _, kf_seed, sobol_seed] = derive_seeds(seed);
            let tunes =
                method == Method::KrrKf || (method.is_kernel() && !matches!(cfg.lambda, LambdaConfig::Fixed { .. }));
            let (train, val) = if tunes {
                let (a, b, _) = cfg.split;
                if !(b > 0.0) {
                    return Err(Error::invalid("empty tuning set: the validation fraction is zero"));
                }
                let (train, val, _) = sampling::split(full, (a / (a + b), b / (a + b), 0.0), train_seed)?;
                (train, val)
            } else {
                (full.clone(), None)
            };
            // Scoring is not part of fitting; the test slot is unused.
            SeedData {
                test: train.clone(),
                train,
                val,
                kf_seed,
                sobol_seed,
            }
        }
    };
    let mut run = MethodRun::failed(seed, method, &Error::invalid("unfinished"));
    run.status = RunStatus::Ok;
    let mut art = Artifacts::default();
    let surrogate = build_surrogate(&ctx, seed, method, &data, &mut None, &mut run, &mut art)?;
    let bounds = match &ctx.basis {
        Some(b) => b.families().iter().map(|f| f.support()).collect(),
        None => ctx.bounds.clone(),
    };
    let model = SavedModel {
        method,
        bounds,
        law: ctx.law(),
        surrogate,
    };
    Ok((model, run, art))
}

fn build_surrogate(
    ctx: &Context,
    seed: u64,
    method: Method,
    data: &SeedData,
    bpdn_cache: &mut Option<SparseCoefficients>,
    run: &mut MethodRun,
    art: &mut Artifacts,
) -> Result<Surrogate> {
    let cfg = &ctx.cfg;
    let mut bpdn = |basis: &TensorBasis| -> Result<SparseCoefficients> {
        if let Some(c) = bpdn_cache {
            return Ok(c.clone());
        }
        let theta = sparse::build_theta(basis, data.train.x())?;
        let sol = theta.solve(data.train.y(), cfg.eta.expect("validated"), &cfg.bpdn)?;
        *bpdn_cache = Some(sol.clone());
        Ok(sol)
    };
    let surrogate = match method {
        Method::FullGpc => {
            let basis = ctx.basis.as_ref().expect("validated");
            let bench = ctx.bench.as_ref().expect("validated");
            let q = cfg.full_gpc_nodes.unwrap_or_else(|| lobatto_nodes_for_degree(2 * basis.order()));
            let rule = QuadratureRule::tensor(basis, &vec![q; basis.dim()])?;
            let g = gpc::project_quadrature(basis, |x| bench.eval(x), &rule)?;
            Surrogate::Gpc(g)
        }
        Method::SparseGpc => {
            let basis = ctx.basis.as_ref().expect("validated");
            let sol = bpdn(basis)?;
            run.sparsity = Some(sol.sparsity(cfg.delta));
            Surrogate::Gpc(GpcSurrogate::from_bpdn(basis, &sol)?)
        }
        Method::Sskrr => {
            let basis = ctx.basis.as_ref().expect("validated");
            let sol = bpdn(basis)?;
            run.sparsity = Some(sol.sparsity(cfg.delta));
            let kappa = match cfg.kappa {
                Some(k) => k,
                None => skrr::default_kappa(data.train.y())?,
            };
            let spectral = skrr::optimal_sigmas(&sol.c, kappa, None)?;
            let kernel = spectral_kernel(basis, &spectral.retained, &spectral.sigmas)?;
            let tuned = tune(ctx, &kernel, data, method, seed, art)?;
            run.lambda = Some(tuned);
            art.coefficients.push(CoefficientDump {
                method,
                seed,
                basis: basis.clone(),
                coeffs: sol.c.clone(),
            });
            Surrogate::Kernel(regression::fit(&kernel, tuned, &data.train, FitOptions::default())?)
        }
        Method::Nskrr => {
            let basis = ctx.basis.as_ref().expect("validated");
            let kappa = match cfg.kappa {
                Some(k) => k,
                None => skrr::default_kappa(data.train.y())?,
            };
            let r = basis.len();
            let all: Vec<usize> = (0..r).collect();
            let sigma0 = vec![kappa / r as f64; r];
            let kernel0 = spectral_kernel(basis, &all, &sigma0)?;
            let lambda = tune(ctx, &kernel0, data, method, seed, art)?;
            run.lambda = Some(lambda);
            let q = cfg.nskrr.nodes.unwrap_or_else(|| lobatto_nodes_for_degree(2 * basis.order()));
            let rule = QuadratureRule::tensor(basis, &vec![q; basis.dim()])?;
            let opts = NskrrOptions {
                sigma0: Some(sigma0),
                kappa: Some(kappa),
                ..NskrrOptions::default()
            };
            let fit = skrr::nskrr_fit(basis, &data.train, lambda, cfg.nskrr.iterations, &rule, &opts)?;
            Surrogate::Kernel(fit.regressor)
        }
        Method::KrrKf => {
            let tuning = ctx.tuning_set(data)?;
            let family = KfFamily::GaussianArd { dim: data.train.dim() };
            let kcfg = KfConfig {
                seed: data.kf_seed,
                nugget_included: true,
                ..cfg.krr_kf.clone()
            };
            let theta0 = kernelflow::initial_theta(&family, data.train.x(), true);
            let trace = kernelflow::kf_run(&data.train, tuning, &family, &theta0, &kcfg)?;
            let theta = trace.theta_star.clone();
            let d = data.train.dim();
            let kernel = family.kernel(&theta)?;
            let reg = regression::fit(&kernel, theta[d], &data.train, FitOptions::default())?;
            run.lambda = Some(theta[d]);
            run.theta = Some(theta);
            art.kf_traces.push(TraceDump { method, seed, trace });
            Surrogate::Kernel(reg)
        }
    };
    Ok(surrogate)
}

fn run_method(
    ctx: &Context,
    seed: u64,
    method: Method,
    data: &SeedData,
    bpdn_cache: &mut Option<SparseCoefficients>,
) -> Result<Fitted> {
    let cfg = &ctx.cfg;
    let mut art = Artifacts::default();
    let mut run = MethodRun {
        seed,
        method,
        status: RunStatus::Ok,
        score: None,
        mean: None,
        variance: None,
        sparsity: None,
        sobol: None,
        kl: None,
        lambda: None,
        theta: None,
    };
    let surrogate = build_surrogate(ctx, seed, method, data, bpdn_cache, &mut run, &mut art)?;

    let pred = surrogate.predict(data.test.x())?;
    run.score = Some(metrics::score(&pred, data.test.y())?);
    match &surrogate {
        Surrogate::Gpc(g) => {
            let (m, v) = g.moments();
            run.mean = Some(m);
            run.variance = Some(v);
            run.sobol = g.sobol_main().ok();
            art.coefficients.push(CoefficientDump {
                method,
                seed,
                basis: g.basis().clone(),
                coeffs: g.coeffs().to_vec(),
            });
        }
        Surrogate::Kernel(reg) => {
            let n = pred.len() as f64;
            let m = pred.iter().sum::<f64>() / n;
            run.mean = Some(m);
            run.variance = Some(skrr::sample_variance(&pred));
            if let Some(ns) = cfg.sobol_samples {
                let law = ctx.law();
                let s = metrics::pick_freeze_sobol(|x| reg.predict_mean(x), &ctx.bounds, &law, ns, data.sobol_seed)?;
                run.sobol = Some(s);
            }
        }
    }
    if cfg.kl {
        // A constant truth or surrogate has no kernel density; KL stays unset.
        if let Ok(est) = metrics::kl_from_samples(data.test.y(), &pred) {
            run.kl = Some(est.divergence);
            art.densities.push(DensityDump {
                method,
                seed,
                grid: est.grid,
                truth: est.p,
                surrogate: est.q,
            });
        }
    }
    Ok(Fitted { run, artifacts: art })
}

fn tune(
    ctx: &Context,
    kernel: &KernelSpec,
    data: &SeedData,
    method: Method,
    seed: u64,
    art: &mut Artifacts,
) -> Result<f64> {
    if let LambdaConfig::Fixed { value } = ctx.cfg.lambda {
        return Ok(value);
    }
    let tuning = ctx.tuning_set(data)?;
    let out = tune_lambda(kernel, &data.train, tuning, &ctx.cfg.lambda, data.kf_seed)?;
    if let Some(trace) = out.trace {
        art.kf_traces.push(TraceDump { method, seed, trace });
    }
    Ok(out.lambda)
}

fn run_seed(ctx: &Context, seed: u64) -> (Vec<MethodRun>, Artifacts) {
    let mut art = Artifacts::default();
    let data = match ctx.seed_data(seed) {
        Ok(d) => d,
        Err(e) => {
            let runs = ctx.methods.iter().map(|&m| MethodRun::failed(seed, m, &e)).collect();
            return (runs, art);
        }
    };
    let mut cache = None;
    let mut runs = Vec::with_capacity(ctx.methods.len());
    for &m in &ctx.methods {
        match run_method(ctx, seed, m, &data, &mut cache) {
            Ok(f) => {
                runs.push(f.run);
                art.coefficients.extend(f.artifacts.coefficients);
                art.densities.extend(f.artifacts.densities);
                art.kf_traces.extend(f.artifacts.kf_traces);
            }
            Err(e) => runs.push(MethodRun::failed(seed, m, &e)),
        }
    }
    (runs, art)
}

/// Runs every configured method on every seed, seeds in parallel.
/// Per-seed failures are recorded in the report rather than returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Artifacts)> {
    let ctx = Context::new(cfg)?;
    let per_seed: Vec<(Vec<MethodRun>, Artifacts)> = cfg.seeds.par_iter().map(|&s| run_seed(&ctx, s)).collect();
    let mut runs = Vec::new();
    let mut art = Artifacts::default();
    for (r, a) in per_seed {
        runs.extend(r);
        art.coefficients.extend(a.coefficients);
        art.densities.extend(a.densities);
        art.kf_traces.extend(a.kf_traces);
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut report = ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_ID.to_string(),
        timestamp,
        config: cfg.clone(),
        references: ctx.bench.as_ref().map(|b| b.references()),
        partial: false,
        runs,
        aggregates: Vec::new(),
    };
    report.reaggregate()?;
    Ok((report, art))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, std::io::BufWriter<std::fs::File>)> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, std::io::BufWriter::new(f)))
}

// Optional outputs left by an earlier render would mix with this one.
fn clear_previous(dir: &Path) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let stale = name == "coefficients.csv"
            || name == "kf_trace.csv"
            || (name.starts_with("kde_") && name.ends_with(".csv"));
        if stale {
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn io(p: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(p, e)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Writes `report.json`, `metrics_per_seed.csv` and `boxstats.csv`, plus
/// `coefficients.csv`, `kde_<method>.csv` and `kf_trace.csv` when the
/// artifacts hold data for them. Returns the written paths.
pub fn report_render(report: &ExperimentReport, artifacts: &Artifacts, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    clear_previous(dir)?;
    let mut written = render_summary(report, dir)?;
    written.extend(render_artifacts(artifacts, dir)?);
    Ok(written)
}

/// Rewrites `report.json`, `metrics_per_seed.csv` and `boxstats.csv` only,
/// leaving plot-data files alone.
pub fn render_summary(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()? + "\n").map_err(io(&path))?;
    written.push(path);

    let (path, mut w) = create(dir, "metrics_per_seed.csv")?;
    let d_sobol = report
        .runs
        .iter()
        .filter_map(|r| r.sobol.as_ref().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut header = "seed,method,status,rmse,nrmse,q2,mre,mean,variance,sparsity,kl,lambda".to_string();
    for j in 1..=d_sobol {
        header += &format!(",sobol_{j}");
    }
    writeln!(w, "{header}").map_err(io(&path))?;
    for r in &report.runs {
        let status = match &r.status {
            RunStatus::Ok => "ok",
            RunStatus::Failed { .. } => "failed",
        };
        let vals: Vec<String> = r
            .metric_values()
            .into_iter()
            .take(9)
            .map(|(name, v)| match name.as_str() {
                "sparsity" => v.map(|v| v.to_string()).unwrap_or_default(),
                _ => opt(v),
            })
            .collect();
        let mut line = format!("{},{},{},{}", r.seed, r.method, status, vals.join(","));
        for j in 0..d_sobol {
            line += ",";
            line += &opt(r.sobol.as_ref().and_then(|s| s.get(j).copied()));
        }
        writeln!(w, "{line}").map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;
    written.push(path);

    let (path, mut w) = create(dir, "boxstats.csv")?;
    writeln!(w, "method,metric,count,median,q25,q75,whisker_lo,whisker_hi,outliers").map_err(io(&path))?;
    for a in &report.aggregates {
        let outliers: Vec<String> = a.stats.outliers.iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
            a.method,
            a.metric,
            a.count,
            a.stats.median,
            a.stats.q25,
            a.stats.q75,
            a.stats.whisker_lo,
            a.stats.whisker_hi,
            outliers.join(" ")
        )
        .map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

fn render_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if !artifacts.coefficients.is_empty() {
        let (path, mut w) = create(dir, "coefficients.csv")?;
        writeln!(w, "method,seed,index,multi_index,value").map_err(io(&path))?;
        for c in &artifacts.coefficients {
            for (k, (mi, v)) in c.basis.multi_indices().iter().zip(&c.coeffs).enumerate() {
                let mi: Vec<String> = mi.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{},{k},{},{v:e}", c.method, c.seed, mi.join(" ")).map_err(io(&path))?;
            }
        }
        w.flush().map_err(io(&path))?;
        written.push(path);
    }

    let mut by_method: BTreeMap<Method, Vec<&DensityDump>> = BTreeMap::new();
    for d in &artifacts.densities {
        by_method.entry(d.method).or_default().push(d);
    }
    for (m, dumps) in by_method {
        let (path, mut w) = create(dir, &format!("kde_{m}.csv"))?;
        writeln!(w, "seed,y,density_true,density_surrogate").map_err(io(&path))?;
        for d in dumps {
            for ((x, p), q) in d.grid.iter().zip(&d.truth).zip(&d.surrogate) {
                writeln!(w, "{},{x:e},{p:e},{q:e}", d.seed).map_err(io(&path))?;
            }
        }
        w.flush().map_err(io(&path))?;
        written.push(path);
    }

    if !artifacts.kf_traces.is_empty() {
        let (path, mut w) = create(dir, "kf_trace.csv")?;
        writeln!(w, "method,seed,iteration,rho,validation_rmse,selected,theta").map_err(io(&path))?;
        for t in &artifacts.kf_traces {
            for r in &t.trace.records {
                let theta: Vec<String> = r.theta.iter().map(|v| format!("{v:e}")).collect();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    t.method,
                    t.seed,
                    r.n,
                    opt(r.rho),
                    opt(r.validation_rmse),
                    u8::from(r.n == t.trace.selected),
                    theta.join(" ")
                )
                .map_err(io(&path))?;
            }
        }
        w.flush().map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(json)
    }

    #[test]
    fn method_choice_parsing() {
        assert_eq!(MethodChoice::default().methods().unwrap(), Method::ALL.to_vec());
        let m = MethodChoice::Name("sskrr, sparse_gpc".into()).methods().unwrap();
        assert_eq!(m, vec![Method::SparseGpc, Method::Sskrr]);
        assert!(MethodChoice::Name("bogus".into()).methods().is_err());
        let c: MethodChoice = serde_json::from_str(r#"["nskrr","krr_kf"]"#).unwrap();
        assert_eq!(c.methods().unwrap(), vec![Method::KrrKf, Method::Nskrr]);
    }

    #[test]
    fn validation_rules() {
        assert!(cfg(r#"{"function":"ishigami","method":"krr_kf","seeds":[]}"#).is_err());
        assert!(cfg(r#"{"function":"ishigami","method":"sskrr","basis":{"p":3},"seeds":[1]}"#).is_err());
        assert!(cfg(r#"{"function":"ishigami","method":"sparse_gpc","seeds":[1],"eta":0.1}"#).is_err());
        assert!(cfg(r#"{"method":"krr_kf","seeds":[1]}"#).is_err());
        assert!(cfg(r#"{"function":"ishigami","method":"krr_kf","seeds":[1],"typo":1}"#).is_err());
        assert!(cfg(r#"{"dataset":"x.csv","method":"full_gpc","basis":{"p":2},"seeds":[1]}"#).is_err());
        let c = cfg(r#"{"function":"ishigami","method":"sskrr","basis":{"p":3},"seeds":[1],"eta":0.1}"#).unwrap();
        assert_eq!(c.lambda.grid().len(), 45);
    }

    #[test]
    fn log_grid_ends() {
        let g = log_grid(1e-12, 1e-1, 45);
        assert!((g[0] - 1e-12).abs() < 1e-24);
        assert!((g[44] - 1e-1).abs() < 1e-14);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn node_guard_refusal_is_recorded() {
        let c = cfg(r#"{"function":"rosenbrock","method":"full_gpc","basis":{"p":4},"seeds":[0],"n_train":4,"n_test":5}"#)
            .unwrap();
        let (rep, _) = run_experiment(&c).unwrap();
        assert!(rep.partial);
        match &rep.runs[0].status {
            RunStatus::Failed { message } => assert!(message.contains("60466176"), "{message}"),
            s => panic!("unexpected {s:?}"),
        }
    }
}
