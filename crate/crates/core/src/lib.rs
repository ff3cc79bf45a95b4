#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Debiased sparse-group LASSO inference for high-dimensional time series:
//! penalized estimation, nodewise precision rows, HAC long-run variances,
//! Granger-causality Wald tests and a Monte Carlo coverage harness.

pub mod data;
pub mod error;
pub mod hac;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod nodewise;
pub mod pipeline;
pub mod sglasso;

pub use data::{Group, GroupStructure, MidasDictionary, StandardizationRecord, TimeSeriesDataset};
pub use error::{Error, Result};
pub use hac::{KernelKind, KernelSpec, LongRunVariance};
pub use inference::{DebiasedEstimate, GrangerTestResult};
pub use nodewise::{NodewiseLambda, PrecisionEstimate};
pub use sglasso::{PenaltySpec, SgLassoFit, SolverSettings};
