use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

use super::dataset::Dataset;
use super::family::{dot, indicator, softmax, softmax_weight, Family, GlmModel};
use super::linalg::{add_kron_outer, add_outer, invert_spd};
use super::newton::{maximize, FitOptions, Objective};
use crate::error::{Error, Result};

/// Coefficient vector; multi-class models use the layout `(beta_1', ..., beta_{K-1}')'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn squared_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl Deref for Coefficients {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Outcome of an iterative fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Coefficients,
    #[serde(with = "crate::serde_matrix::option")]
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient norm divided by the effective number of observations.
    pub final_gradient_norm: f64,
    /// Objective value at the returned coefficients.
    pub objective: f64,
}

impl FitResult {
    pub fn with_covariance(mut self, cov: DMatrix<f64>) -> Self {
        self.covariance = Some(cov);
        self
    }
}

/// A weighted set of dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSet {
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
}

impl RowSet {
    pub fn all(n: usize) -> Self {
        Self { rows: (0..n).collect(), weights: vec![1.0; n] }
    }

    pub fn unweighted(rows: Vec<usize>) -> Self {
        let weights = vec![1.0; rows.len()];
        Self { rows, weights }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Weighted log-likelihood `sum_i w_i log f(y_i | x_i; beta)` over a row set.
pub struct Likelihood<'a> {
    pub model: &'a GlmModel,
    pub data: &'a Dataset,
    pub rows: &'a RowSet,
}

impl<'a> Likelihood<'a> {
    pub fn new(model: &'a GlmModel, data: &'a Dataset, rows: &'a RowSet) -> Self {
        Self { model, data, rows }
    }
}

impl Objective for Likelihood<'_> {
    fn dim(&self) -> usize {
        self.model.coef_dim(self.data.n_features())
    }

    fn scale(&self) -> f64 {
        self.rows.total_weight()
    }

    fn value(&self, beta: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (&i, &w) in self.rows.rows.iter().zip(&self.rows.weights) {
            total += w * self.model.log_density(beta, self.data.row(i), self.data.response(i))?;
        }
        Ok(total)
    }

    fn derivatives(&self, beta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        let d = self.data.n_features();
        let mut grad = vec![0.0; dim];
        let mut info = vec![0.0; dim * dim];
        let phi = self.model.dispersion;
        for (&i, &w) in self.rows.rows.iter().zip(&self.rows.weights) {
            let x = self.data.row(i);
            let y = self.data.response(i);
            match self.model.family {
                Family::MultiLogistic { classes } => {
                    let p = softmax(&self.model.class_predictors(beta, x));
                    for c in 0..classes - 1 {
                        let r = w * (indicator(y, c) - p[c]);
                        for j in 0..d {
                            grad[c * d + j] += r * x[j];
                        }
                    }
                    add_kron_outer(&mut info, &softmax_weight(&p, classes - 1), classes - 1, x, w);
                }
                _ => {
                    let t = self.model.univariate_terms(dot(beta, x));
                    let r = w * (y - t.mu) * t.b1 / phi;
                    for j in 0..d {
                        grad[j] += r * x[j];
                    }
                    add_outer(&mut info, x, w * t.b1 * t.b1 * t.variance / (phi * phi));
                }
            }
        }
        Ok((DVector::from_vec(grad), DMatrix::from_row_slice(dim, dim, &info)))
    }
}

/// Full-data maximum likelihood by Fisher scoring. The covariance of the
/// result is the inverse observed Fisher information.
pub fn fisher_scoring_mle(model: &GlmModel, data: &Dataset, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    weighted_mle(model, data, &RowSet::all(data.n_rows()), init, opts)
}

/// Maximum weighted likelihood over a row set.
pub fn weighted_mle(model: &GlmModel, data: &Dataset, rows: &RowSet, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if rows.is_empty() {
        return Err(Error::EmptySubsample);
    }
    for &i in &rows.rows {
        model.validate_response(data.response(i))?;
    }
    let obj = Likelihood::new(model, data, rows);
    let fit = maximize(&obj, init, opts)?;
    let (_, info) = obj.derivatives(&fit.coefficients)?;
    match invert_spd(&info) {
        Ok(cov) => Ok(fit.with_covariance(cov)),
        Err(_) => Ok(fit),
    }
}

/// Ridge used when retrying a singular fit: `1e-8 * trace / dim`.
pub fn default_ridge(info: &DMatrix<f64>) -> f64 {
    1e-8 * info.trace() / info.nrows() as f64
}
