//! Budgeted acquisition of human aspect evaluations given cheap AI signals.
//!
//! The crate estimates how much each subset of human-evaluated aspects is
//! worth to a downstream squared-error predictor, picks subsets under a query
//! budget, and trains and scores the downstream model with imputation for the
//! aspects left unqueried:
//!
//! - [`data`]: datasets, aspect layout, CSV I/O, imputation and feature
//!   construction.
//! - [`regression`]: ridge regression, residualization, fold plans and
//!   cross-fitting.
//! - [`reward_np`]: cross-fitted orthogonal pseudo-outcome rewards.
//! - [`reward_linear`]: closed-form linear rewards and their delta-method
//!   variance.
//! - [`selection`]: the budgeted selection rules.
//! - [`dgp`]: a linear-Gaussian generator with exact population oracles.
//! - [`pipeline`]: end-to-end evaluation, verification experiments and
//!   reports.

#[cfg(test)]
#[macro_use]
mod testutil;

pub mod data;
pub mod dgp;
pub mod error;
mod linalg;
pub mod regression;
pub mod reward_linear;
pub mod reward_np;
pub mod pipeline;
pub mod selection;

pub use data::{AspectBlocks, ContextMap, Dataset, Subset};
pub use error::{Error, Result};
