//! Plug-in variance estimates for the MSCLE and the weighted estimator, and
//! normal-theory confidence intervals.
//!
//! Both estimates are returned `n`-scaled: `matrix` approximates the
//! covariance of `sqrt(n) (beta_hat - beta)` and [`VarianceEstimate::covariance`]
//! divides by the realized subsample size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::MscleObjective;
use crate::glm::linalg::{add_outer, invert_spd, symmetrize};
use crate::glm::{Coefficients, Dataset, FitResult, GlmModel};
use crate::subsampling::{PilotEstimate, SubsampleDraw, SubsamplePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mscle,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// `Sigma^{-1}` for the MSCLE, `M^{-1} V M^{-1}` for the weighted estimator.
    #[serde(with = "crate::serde_matrix")]
    pub matrix: DMatrix<f64>,
    /// Divisor turning `matrix` into a coefficient covariance (realized size).
    pub scale: f64,
    pub kind: EstimatorKind,
}

impl VarianceEstimate {
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.matrix / self.scale
    }

    /// Trace of the coefficient covariance.
    pub fn trace(&self) -> f64 {
        self.matrix.trace() / self.scale
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|j| (self.matrix[(j, j)] / self.scale).max(0.0).sqrt()).collect()
    }
}

fn check_beta(model: &GlmModel, data: &Dataset, beta: &[f64]) -> Result<()> {
    let dim = model.coef_dim(data.n_features());
    if beta.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: beta.len() });
    }
    Ok(())
}

/// `Sigma_hat = (1/n) sum_i delta_i s_i s_i^T` with `s_i` the corrected
/// per-row score of the sampled conditional likelihood at `beta_hat`;
/// the coefficient covariance is `Sigma_hat^{-1} / n`.
pub fn estimate_sigma_mscle(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    beta_hat: &Coefficients,
) -> Result<VarianceEstimate> {
    check_beta(model, data, beta_hat)?;
    let obj = MscleObjective::new(model, data, plan, draw, pilot)?;
    let scores = obj.row_scores(beta_hat)?;
    let dim = beta_hat.len();
    let mut buf = vec![0.0; dim * dim];
    for s in &scores {
        add_outer(&mut buf, s, 1.0);
    }
    let n_hat = scores.len() as f64;
    let sigma = DMatrix::from_row_slice(dim, dim, &buf) / n_hat;
    let matrix = invert_spd(&sigma).map_err(|_| Error::SingularVariance)?;
    Ok(VarianceEstimate { matrix: symmetrize(&matrix), scale: n_hat, kind: EstimatorKind::Mscle })
}

/// Sandwich `M^{-1} V M^{-1}` with `M = (1/n) sum delta_i w_i I_i` and
/// `V = (1/n) sum delta_i w_i^2 s_i s_i^T`, `w_i = (n/N)/pi_i`.
pub fn estimate_v_weighted(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    beta_hat: &Coefficients,
) -> Result<VarianceEstimate> {
    check_beta(model, data, beta_hat)?;
    if plan.len() != data.n_rows() || draw.indicators.len() != data.n_rows() {
        return Err(Error::DimensionMismatch { expected: data.n_rows(), found: plan.len().min(draw.indicators.len()) });
    }
    let rows = draw.selected();
    if rows.is_empty() {
        return Err(Error::EmptySubsample);
    }
    let dim = beta_hat.len();
    let ratio = plan.target_avg_size / data.n_rows() as f64;
    let mut m = DMatrix::zeros(dim, dim);
    let mut v = vec![0.0; dim * dim];
    for &i in &rows {
        let p = plan.probabilities[i];
        if !(p > 0.0) {
            return Err(Error::ZeroProbabilitySelected { row: i });
        }
        let w = ratio / p;
        let x = data.row(i);
        m += DMatrix::from_row_slice(dim, dim, &model.information(beta_hat, x)?) * w;
        add_outer(&mut v, &model.score(beta_hat, x, data.response(i))?, w * w);
    }
    let n_hat = rows.len() as f64;
    m /= n_hat;
    let v = DMatrix::from_row_slice(dim, dim, &v) / n_hat;
    let m_inv = invert_spd(&m).map_err(|_| Error::SingularVariance)?;
    let matrix = symmetrize(&(&m_inv * v * &m_inv));
    Ok(VarianceEstimate { matrix, scale: n_hat, kind: EstimatorKind::Weighted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in [0, 1), got {level}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 * (1.0 + level)))
}

/// `beta_j +/- z sqrt(cov_jj)` for every coefficient.
pub fn confidence_intervals(fit: &FitResult, variance: &VarianceEstimate, level: f64) -> Result<Vec<Interval>> {
    let z = normal_quantile(level)?;
    let se = variance.standard_errors();
    if se.len() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: fit.coefficients.len(), found: se.len() });
    }
    Ok(fit
        .coefficients
        .iter()
        .zip(se)
        .map(|(b, s)| Interval { lower: b - z * s, upper: b + z * s })
        .collect())
}
