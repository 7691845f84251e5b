//! Multivariate conditional transformation models (MCTMs) and coresets for
//! fitting them.
//!
//! An MCTM describes a `J`-dimensional continuous outcome through monotone
//! Bernstein-polynomial marginal transformations tied together by a Gaussian
//! copula with a unit lower-triangular precision factor. Fitting it by
//! maximum likelihood touches every observation in every optimizer step, so
//! this crate also builds small weighted subsets (coresets) whose weighted
//! likelihood tracks the full one:
//!
//! * [`scores`]: leverage scores of the stacked basis rows and the sampling
//!   probabilities derived from them,
//! * [`hull`]: a greedy sparse approximation of the convex hull of the
//!   derivative rows, which keeps the log-Jacobian term under control,
//! * [`coreset`]: uniform, leverage-only and leverage-plus-hull samplers.
//!
//! The [`experiment`] module wires these into a reproducible benchmark over
//! the simulated processes in [`dgp`] or user-supplied CSV data.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod coreset;
pub mod data;
pub mod dgp;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod hull;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scores;

pub use basis::{BasisConfig, BasisExpansion, BoundPolicy};
pub use coreset::{CoresetMethod, CoresetOptions, CoresetSample};
pub use data::Dataset;
pub use dgp::{DgpId, DgpSpec};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentReport, MetricRow};
pub use fit::{FitConfig, FitResult, Initializer, Parametrization};
pub use hull::{HullPooling, HullSelection};
pub use model::{LossBreakdown, ModelDocument, ModelParams};
pub use scores::{LeverageMethod, LeverageScores, SamplingProbabilities};
