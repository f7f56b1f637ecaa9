//! Informative subsampling for large regression datasets and estimation from
//! the subsample by maximum sampled conditional likelihood, with
//! inverse-probability-weighted and complete-case baselines, plug-in variance
//! estimates and a Monte Carlo study harness.
//!
//! The typical workflow:
//!
//! 1. fit a pilot on a small uniform sample ([`subsampling::pilot_fit`]);
//! 2. evaluate informative probabilities on every row and draw a Bernoulli
//!    subsample ([`subsampling::plan_probabilities`], [`subsampling::draw_subsample`]);
//! 3. estimate from the subsample ([`estimators::mscle_fit`],
//!    [`estimators::weighted_fit`], [`estimators::naive_fit`]);
//! 4. attach a variance estimate and intervals ([`variance`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod glm;
pub mod io;
pub mod rng;
pub(crate) mod serde_matrix;
pub mod subsampling;
pub mod variance;

pub use error::{Error, Result};
pub use glm::{Coefficients, Dataset, Family, FitOptions, FitResult, GlmModel};
