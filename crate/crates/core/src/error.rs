use thiserror::Error;

use crate::kernelflow::KfTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("tensor rule needs {nodes} nodes, above the guard of {limit}")]
    NodeGuard { nodes: String, limit: u64 },

    #[error("matrix is not numerically positive definite: pivot {index} is {pivot:e}")]
    Singular { index: usize, pivot: f64 },

    #[error("numerical consistency violated: {0}")]
    Numerical(String),

    #[error("BPDN did not converge after {iterations} iterations (residual {residual:e}, target {eta:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        eta: f64,
        best: Vec<f64>,
    },

    #[error("BPDN infeasible: least-squares residual floor {floor:e} exceeds eta {eta:e}")]
    Infeasible { floor: f64, eta: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("all projected coefficients fell below the drop floor at NSKRR iteration {iteration}")]
    DegenerateIteration { iteration: usize },

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("kernel flow aborted after {consecutive} consecutive singular iterations")]
    KfAborted { consecutive: usize, trace: Box<KfTrace> },

    #[error("model evaluation failed in matrix {matrix}, row {row}: {message}")]
    Evaluation {
        matrix: usize,
        row: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
