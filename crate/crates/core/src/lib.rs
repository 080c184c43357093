//! Selection models for meta analysis with a monotone non-increasing step
//! weight function of the study p-value.
//!
//! The crate covers:
//!
//! * the grouped-p-value model and its weighted normal log-likelihood
//!   ([`model`], [`likelihood`]),
//! * a differential-evolution maximizer over the monotone cone, the
//!   unconstrained coordinate-wise Newton fit and the random-effects null
//!   fit ([`optimizer`]),
//! * a profile-likelihood interval for the pooled effect and a Monte-Carlo
//!   test of "no selection" ([`inference`]).
//!
//! Data-parallel loops (population evaluation, profile grids, simulation
//! replicates) run on rayon when the `parallel` feature is enabled and fall
//! back to plain iterators otherwise; see [`Execution`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
mod error;
mod exec;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod optimizer;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use likelihood::{HMatrix, LogLikContext, PENALTY};
pub use model::{GroupedPvalues, MetaDataset, ModelParams, Normalization, StepWeights, Study};
pub use optimizer::{DEConfig, FitMethod, FitResult};
