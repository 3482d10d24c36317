use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use skrr_core::experiment::{
    self, fit_dataset, render_summary, report_render, run_experiment, tune_lambda, ExperimentConfig,
    ExperimentReport, LambdaConfig, SavedModel,
};
use skrr_core::kernels::{spectral_kernel, KernelSpec};
use skrr_core::polybasis::{TensorBasis, UnivariateFamily};
use skrr_core::regression::Dataset;
use skrr_core::sampling;
use skrr_core::skrr;
use skrr_core::sparse::{self, BpdnOptions};

#[derive(Parser)]
#[command(name = "skrr", version, about = "Kernel and polynomial chaos surrogate experiments")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated experiment on a benchmark function or dataset.
    Bench {
        #[command(flatten)]
        exp: ExpArgs,
        /// Output directory.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fit one surrogate and write it as model JSON.
    Fit {
        #[command(flatten)]
        exp: ExpArgs,
        /// Model file to write.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Predict mean and variance at the inputs of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV with columns x1..xd; a trailing y column is ignored.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// First-order Sobol' indices of a saved model.
    Sobol {
        #[arg(long)]
        model: PathBuf,
        /// Pick-freeze sample size for kernel models.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Select the nugget of a kernel on a training/validation split.
    Tune {
        #[command(flatten)]
        exp: ExpArgs,
        /// Kernel JSON, inline or as a file path. Without it the spectral
        /// kernel of the BPDN coefficients is used (needs --p and --eta).
        #[arg(long)]
        kernel: Option<String>,
        /// Write the result JSON here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Validate a report, recompute its aggregates and rewrite the tables.
    Report {
        /// report.json, or the directory holding it.
        input: PathBuf,
        /// Defaults to the directory of the input.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the JSON schema of the config or report files.
    Schema {
        #[arg(value_parser = ["config", "report"])]
        which: String,
    },
}

/// Experiment settings; flags override keys of the config file.
#[derive(Args, Default)]
struct ExpArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark name: ishigami, rosenbrock or constant.
    #[arg(long)]
    function: Option<String>,
    /// CSV dataset with header x1..xd,y.
    #[arg(long, alias = "data")]
    dataset: Option<PathBuf>,
    /// all, a method name or a comma list.
    #[arg(long)]
    method: Option<String>,
    /// Total polynomial order.
    #[arg(long)]
    p: Option<usize>,
    /// Beta shapes `a,b` for a Jacobi basis; Legendre otherwise.
    #[arg(long)]
    jacobi: Option<String>,
    /// Basis support `lo:hi`, one per dimension comma-separated, or a
    /// single pair for every dimension.
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Fixed nugget; disables tuning.
    #[arg(long)]
    lambda: Option<f64>,
    /// grid or kf.
    #[arg(long, value_parser = ["grid", "kf"])]
    lambda_mode: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Fractions `train,val,test` in dataset mode.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list or half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    /// Pick-freeze sample size for kernel surrogates.
    #[arg(long)]
    sobol_samples: Option<usize>,
    /// Tune on the test set instead of the validation set.
    #[arg(long)]
    paper_leakage: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed '{t}'")))
        .collect()
}

fn parse_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad {what} value '{t}'")))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != n {
        bail!("{what} needs {n} comma-separated values");
    }
    Ok(v)
}

impl ExpArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        self.config_with(None)
    }

    /// `method` fills in the method when neither the flags nor the file set one.
    fn config_with(&self, method: Option<&str>) -> Result<ExperimentConfig> {
        let mut v = match &self.config {
            Some(p) => {
                let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Value::Object(Map::new()),
        };
        let obj = v.as_object_mut().context("config must be a JSON object")?;
        if let Some(f) = &self.function {
            obj.insert("function".into(), json!(f));
            obj.remove("dataset");
        }
        if let Some(d) = &self.dataset {
            obj.insert("dataset".into(), json!(d));
            obj.remove("function");
        }
        if let Some(m) = &self.method {
            obj.insert("method".into(), json!(m));
        } else if let Some(m) = method {
            obj.entry("method").or_insert_with(|| json!(m));
        }
        if self.p.is_some() || self.jacobi.is_some() || self.bounds.is_some() {
            let basis = obj.entry("basis").or_insert_with(|| json!({}));
            let b = basis.as_object_mut().context("'basis' must be an object")?;
            if let Some(p) = self.p {
                b.insert("p".into(), json!(p));
            }
            if let Some(s) = &self.jacobi {
                let ab = parse_floats(s, 2, "jacobi")?;
                b.insert("family".into(), json!({"kind": "jacobi_beta", "a": ab[0], "b": ab[1]}));
            }
            if let Some(s) = &self.bounds {
                b.insert("bounds".into(), json!(self.parse_bounds(s, obj_dim(&self.function))?));
            }
        }
        for (key, val) in [("eta", self.eta), ("kappa", self.kappa)] {
            if let Some(x) = val {
                obj.insert(key.into(), json!(x));
            }
        }
        if let Some(l) = self.lambda {
            obj.insert("lambda".into(), json!({"mode": "fixed", "value": l}));
        } else if let Some(m) = &self.lambda_mode {
            obj.insert("lambda".into(), json!({ "mode": m }));
        }
        for (key, val) in [("n_train", self.n_train), ("n_val", self.n_val), ("n_test", self.n_test)] {
            if let Some(x) = val {
                obj.insert(key.into(), json!(x));
            }
        }
        if let Some(s) = &self.split {
            obj.insert("split".into(), json!(parse_floats(s, 3, "split")?));
        }
        if let Some(s) = self.seed {
            obj.insert("seeds".into(), json!([s]));
        }
        if let Some(s) = &self.seeds {
            obj.insert("seeds".into(), json!(parse_seeds(s)?));
        }
        if !obj.contains_key("seeds") {
            obj.insert("seeds".into(), json!([0]));
        }
        if let Some(n) = self.sobol_samples {
            obj.insert("sobol_samples".into(), json!(n));
        }
        if self.paper_leakage {
            obj.insert("paper_leakage".into(), json!(true));
        }
        Ok(ExperimentConfig::from_json(&v.to_string())?)
    }
}

impl ExpArgs {
    fn parse_bounds(&self, s: &str, dim: Option<usize>) -> Result<Vec<(f64, f64)>> {
        let pairs = s
            .split(',')
            .map(|t| {
                let (lo, hi) = t.split_once(':').with_context(|| format!("bound '{t}' is not lo:hi"))?;
                Ok((lo.trim().parse::<f64>()?, hi.trim().parse::<f64>()?))
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = match (dim, &self.dataset) {
            (Some(d), _) => Some(d),
            (None, Some(p)) => Some(Dataset::read_csv(p)?.dim()),
            _ => None,
        };
        match (pairs.len(), dim) {
            (1, Some(d)) => Ok(vec![pairs[0]; d]),
            _ => Ok(pairs),
        }
    }
}

fn obj_dim(function: &Option<String>) -> Option<usize> {
    function
        .as_deref()
        .and_then(|f| skrr_core::benchfn::Benchmark::from_name(f).ok())
        .map(|b| b.dim())
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os("SKRR_OUTPUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("skrr-output"))
}

fn bench(exp: &ExpArgs, output: Option<PathBuf>) -> Result<()> {
    let cfg = exp.config()?;
    let dir = output_dir(output, &cfg);
    let (report, artifacts) = run_experiment(&cfg)?;
    let files = report_render(&report, &artifacts, &dir)?;
    print_summary(&report);
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    if report.partial {
        eprintln!("warning: some runs failed; see report.json");
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    let mut failed: BTreeMap<String, usize> = BTreeMap::new();
    for r in report.runs.iter().filter(|r| !r.is_ok()) {
        *failed.entry(r.method.to_string()).or_default() += 1;
    }
    println!("{:<12} {:<10} {:>6} {:>14} {:>14} {:>14}", "method", "metric", "count", "median", "q25", "q75");
    for a in &report.aggregates {
        if matches!(a.metric.as_str(), "rmse" | "q2" | "mean" | "variance" | "sparsity" | "kl" | "mre") {
            println!(
                "{:<12} {:<10} {:>6} {:>14.7e} {:>14.7e} {:>14.7e}",
                a.method.to_string(),
                a.metric,
                a.count,
                a.stats.median,
                a.stats.q25,
                a.stats.q75
            );
        }
    }
    for (m, n) in failed {
        let msg = report
            .runs
            .iter()
            .find_map(|r| match &r.status {
                experiment::RunStatus::Failed { message } if r.method.to_string() == m => Some(message.clone()),
                _ => None,
            })
            .unwrap_or_default();
        println!("{m}: {n} failed run(s): {msg}");
    }
}

fn fit(exp: &ExpArgs, output: &Path) -> Result<()> {
    let cfg = exp.config()?;
    let (model, run, _) = fit_dataset(&cfg, cfg.seeds[0])?;
    model.save(output)?;
    let mut info = json!({ "method": run.method, "model": output });
    if let Some(l) = run.lambda {
        info["lambda"] = json!(l);
    }
    if let Some(s) = run.sparsity {
        info["sparsity"] = json!(s);
    }
    if let Some(t) = &run.theta {
        info["theta"] = json!(t);
    }
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(())
}

fn read_inputs(path: &Path, d: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("input CSV is empty")?.split(',').map(str::trim).collect();
    for j in 0..d {
        let want = format!("x{}", j + 1);
        if header.get(j) != Some(&want.as_str()) {
            bail!("column {} of {} must be '{want}'", j + 1, path.display());
        }
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let vals: Vec<&str> = l.split(',').collect();
            if vals.len() < d {
                bail!("row {} of {} has {} columns, expected {d}", i + 1, path.display(), vals.len());
            }
            vals[..d]
                .iter()
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("row {}: bad number '{v}'", i + 1)))
                .collect()
        })
        .collect()
}

fn predict(model: &Path, input: &Path, output: Option<&Path>) -> Result<()> {
    let model = SavedModel::load(model)?;
    let d = model.surrogate.dim();
    let xs = read_inputs(input, d)?;
    let mean = model.surrogate.predict(&xs)?;
    let var = model.surrogate.variance(&xs)?;
    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let cols: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(out, "{},mean,variance", cols.join(","))?;
    for (i, x) in xs.iter().enumerate() {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        let v = var.as_ref().map(|v| format!("{:e}", v[i])).unwrap_or_default();
        writeln!(out, "{},{:e},{v}", xs.join(","), mean[i])?;
    }
    out.flush()?;
    Ok(())
}

fn sobol(model: &Path, samples: usize, seed: u64) -> Result<()> {
    let model = SavedModel::load(model)?;
    let s = model.sobol(samples, seed)?;
    println!("{}", serde_json::to_string_pretty(&json!({ "method": model.method, "sobol_main": s }))?);
    Ok(())
}

fn tune(exp: &ExpArgs, kernel: Option<&str>, output: Option<&Path>) -> Result<()> {
    let cfg = exp.config_with(Some(if kernel.is_some() { "krr_kf" } else { "sskrr" }))?;
    let data = match &cfg.dataset {
        Some(p) => Dataset::read_csv(p)?,
        None => bail!("tune needs --dataset"),
    };
    let (a, b, _) = cfg.split;
    if !(b > 0.0) {
        bail!("empty tuning set: the validation fraction is zero");
    }
    let seed = cfg.seeds[0];
    let (train, val, _) = sampling::split(&data, (a / (a + b), b / (a + b), 0.0), seed)?;
    let val = val.context("empty tuning set")?;
    let kernel = match kernel {
        Some(k) => {
            let text = if Path::new(k).is_file() {
                std::fs::read_to_string(k).with_context(|| format!("reading {k}"))?
            } else {
                k.to_string()
            };
            let spec: KernelSpec = serde_json::from_str(&text).context("parsing kernel JSON")?;
            spec.validate()?;
            spec
        }
        None => {
            let (basis_cfg, eta) = match (&cfg.basis, cfg.eta) {
                (Some(bc), Some(eta)) => (bc, eta),
                _ => bail!("without --kernel, tune needs --p and --eta for the spectral kernel"),
            };
            let bounds = basis_cfg.bounds.clone().unwrap_or_else(|| data_bounds(&data));
            let fams = bounds
                .iter()
                .map(|&(lo, hi)| UnivariateFamily::legendre(lo, hi))
                .collect::<skrr_core::Result<Vec<_>>>()?;
            let basis = TensorBasis::new(fams, basis_cfg.p)?;
            let theta = sparse::build_theta(&basis, train.x())?;
            let coeffs = theta.solve(train.y(), eta, &BpdnOptions::default())?;
            let kappa = match cfg.kappa {
                Some(k) => k,
                None => skrr::default_kappa(train.y())?,
            };
            let sol = skrr::optimal_sigmas(&coeffs.c, kappa, None)?;
            spectral_kernel(&basis, &sol.retained, &sol.sigmas)?
        }
    };
    let mode = match cfg.lambda {
        LambdaConfig::Fixed { .. } => bail!("tune needs --lambda-mode grid or kf, not a fixed nugget"),
        ref m => m.clone(),
    };
    let out = tune_lambda(&kernel, &train, &val, &mode, seed)?;
    let curve: Vec<Value> = out.curve.iter().map(|(l, r)| json!({ "lambda": l, "rmse": r })).collect();
    let result = json!({
        "lambda": out.lambda,
        "curve": curve,
        "trace": out.trace.map(|t| serde_json::to_value(t)).transpose()?,
    });
    let text = serde_json::to_string_pretty(&result)?;
    match output {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn data_bounds(data: &Dataset) -> Vec<(f64, f64)> {
    (0..data.dim())
        .map(|j| {
            let lo = data.x().iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = data.x().iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect()
}

fn report(input: &Path, output: Option<PathBuf>) -> Result<()> {
    let path = if input.is_dir() { input.join("report.json") } else { input.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut rep = ExperimentReport::parse(&text)?;
    rep.reaggregate()?;
    rep.check()?;
    let dir = output.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    for f in render_summary(&rep, &dir)? {
        eprintln!("wrote {}", f.display());
    }
    print_summary(&rep);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    match cli.command {
        Command::Bench { exp, output } => bench(&exp, output),
        Command::Fit { exp, output } => fit(&exp, &output),
        Command::Predict { model, input, output } => predict(&model, &input, output.as_deref()),
        Command::Sobol { model, samples, seed } => sobol(&model, samples, seed),
        Command::Tune { exp, kernel, output } => tune(&exp, kernel.as_deref(), output.as_deref()),
        Command::Report { input, output } => report(&input, output),
        Command::Schema { which } => {
            let s = if which == "config" { experiment::CONFIG_SCHEMA } else { experiment::REPORT_SCHEMA };
            print!("{s}");
            Ok(())
        }
    }
}
