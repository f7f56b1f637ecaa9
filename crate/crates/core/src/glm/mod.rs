//! Exponential-family GLM primitives and a reference full-data MLE.

mod dataset;
mod family;
mod fit;
pub mod linalg;
mod newton;

pub use dataset::Dataset;
pub use family::{
    dot, log_sum_exp, logistic, softmax, softplus, BinaryLink, Family, GlmModel, MeanResponse, UnivariateTerms,
};
pub(crate) use family::{indicator, softmax_weight};
pub use fit::{default_ridge, fisher_scoring_mle, weighted_mle, Coefficients, FitResult, Likelihood, RowSet};
pub use newton::{maximize, FitOptions, Objective};
