use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Covariate rows plus response, stored row-major.
///
/// The intercept is not added implicitly; use [`Dataset::with_intercept`] to
/// prepend the ones column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n_rows: usize,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset from row-major covariates.
    pub fn from_rows(x: Vec<f64>, y: Vec<f64>, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Data("dataset needs at least one covariate column".into()));
        }
        if y.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::DimensionMismatch { expected: y.len() * n_features, found: x.len() });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite covariate at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response at row {row}")));
        }
        Ok(Self { n_rows: y.len(), x, y, n_features })
    }

    pub fn from_matrix(x: &DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let d = x.ncols();
        let mut rows = Vec::with_capacity(x.len());
        for i in 0..x.nrows() {
            rows.extend(x.row(i).iter());
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        Self::from_rows(rows, y, d)
    }

    /// Prepends a column of ones to row-major `raw` covariates with `raw_features` columns.
    pub fn with_intercept(raw: &[f64], y: Vec<f64>, raw_features: usize) -> Result<Self> {
        if raw_features == 0 && !raw.is_empty() {
            return Err(Error::Data("covariate width is zero".into()));
        }
        let n = y.len();
        if raw.len() != n * raw_features {
            return Err(Error::DimensionMismatch { expected: n * raw_features, found: raw.len() });
        }
        let d = raw_features + 1;
        let mut x = Vec::with_capacity(n * d);
        for i in 0..n {
            x.push(1.0);
            x.extend_from_slice(&raw[i * raw_features..(i + 1) * raw_features]);
        }
        Self::from_rows(x, y, d)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn rows_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_features, &self.x)
    }

    /// New dataset holding `rows` (in the given order, duplicates allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * self.n_features);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self::from_rows(x, y, self.n_features)
    }
}
