//! Randomization-based causal inference for balanced `2^K` factorial experiments.
//!
//! The crate is organised around the potential-outcomes table (the *science*):
//!
//! - [`design`]: treatment combinations, contrast vectors and effect ordering.
//! - [`science`]: estimands, exact population moments and synthetic generators.
//! - [`assignment`]: balanced complete randomization and exact enumeration.
//! - [`neyman`]: point estimates, conservative variance estimates and exact oracles.
//! - [`fisher`]: sharp-null randomization tests and fiducial intervals.
//! - [`bayes`]: conjugate Gaussian posterior with finite-population imputation.
//! - [`binary`]: plug-in and logistic-model inference for binary outcomes.
//! - [`report`]: pipelines that combine the methods into serializable reports.

pub mod assignment;
pub mod bayes;
pub mod binary;
pub mod config;
pub mod design;
pub mod error;
pub mod exec;
pub mod fisher;
pub mod fixtures;
pub mod io;
pub mod neyman;
pub mod report;
pub mod science;
pub mod seed;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use design::{Design, EffectIndex, TreatmentCombination};
pub use error::{Error, ErrorClass, Result};
pub use exec::Execution;
pub use science::{CorrelationStructure, ScienceMatrix};
