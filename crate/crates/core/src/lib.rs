//! Kernel surrogate modeling.
//!
//! Two ways of learning a kernel from data are provided: parametric kernel
//! flow ([`kernelflow`]), which tunes base-kernel hyperparameters by the loss
//! of RKHS accuracy incurred when halving the data, and spectral kernel ridge
//! regression ([`skrr`]), which builds a Mercer kernel on an orthonormal
//! polynomial basis with eigenvalues that minimize the RKHS norm of the
//! target. Generalized polynomial chaos surrogates ([`gpc`]) serve as the
//! baselines, and [`experiment`] runs the benchmark studies end to end.

pub mod benchfn;
pub mod error;
pub mod experiment;
pub mod gpc;
pub mod kernelflow;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod polybasis;
pub mod regression;
pub mod sampling;
pub mod skrr;
pub mod sparse;

pub use error::{Error, Result};
pub use gpc::GpcSurrogate;
pub use kernels::KernelSpec;
pub use polybasis::{MultiIndexSet, QuadratureRule, TensorBasis, UnivariateFamily};
pub use regression::{Dataset, TrainedRegressor};
pub use skrr::SpectralSolution;
pub use sparse::SparseCoefficients;
