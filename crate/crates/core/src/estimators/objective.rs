use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::moments::{binary_kappas_complement, multiclass_adjustment, poisson_kappas};
use crate::error::{Error, Result};
use crate::glm::linalg::{add_kron_outer, add_outer};
use crate::glm::{dot, indicator, log_sum_exp, softmax, softmax_weight, Dataset, Family, GlmModel, Objective};
use crate::subsampling::{PilotEstimate, SamplingMethod, SubsampleDraw, SubsamplePlan};

/// Curvature used by Fisher scoring on the univariate MSCLE objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    /// Drops the `b''` term; equal to the full Hessian for canonical links.
    #[default]
    Fisher,
    /// Exact negative Hessian including the `b''` term.
    Full,
}

/// Below this, `kappa0` of a selected row has underflowed.
const KAPPA0_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
enum Correction {
    /// Non-informative plan: the complete-case likelihood.
    None,
    /// Poisson family; pilot mean per selected row.
    Kappa(Vec<f64>),
    /// Binary family; pilot `(p, 1 - p)` per selected row.
    Binary(Vec<(f64, f64)>),
    /// Multi-class family; log offsets per selected row (length K each).
    Offsets(Vec<Vec<f64>>),
}

/// Sampled conditional log-likelihood over the selected rows of a draw.
#[derive(Debug, Clone)]
pub struct MscleObjective<'a> {
    model: &'a GlmModel,
    data: &'a Dataset,
    rows: Vec<usize>,
    correction: Correction,
    curvature: Curvature,
}

impl<'a> MscleObjective<'a> {
    /// Builds the objective matching the plan's sampling rule.
    pub fn new(
        model: &'a GlmModel,
        data: &'a Dataset,
        plan: &SubsamplePlan,
        draw: &SubsampleDraw,
        pilot: &PilotEstimate,
    ) -> Result<Self> {
        if plan.len() != data.n_rows() || draw.indicators.len() != data.n_rows() {
            return Err(Error::DimensionMismatch { expected: data.n_rows(), found: plan.len().min(draw.indicators.len()) });
        }
        let rows = draw.selected();
        if rows.is_empty() {
            return Err(Error::EmptySubsample);
        }
        for &i in &rows {
            model.validate_response(data.response(i))?;
        }
        let correction = if plan.method == SamplingMethod::Uniform {
            Correction::None
        } else {
            if pilot.method != plan.method {
                return Err(Error::InvalidArgument(format!(
                    "plan uses `{}` sampling but the pilot was computed for `{}`",
                    plan.method.name(),
                    pilot.method.name()
                )));
            }
            let beta = pilot.beta.as_slice();
            match (model.family, plan.method) {
                (Family::MultiLogistic { .. }, SamplingMethod::MultiClassLopt) => Correction::Offsets(
                    rows.iter()
                        .map(|&i| multiclass_adjustment(&softmax(&model.class_predictors(beta, data.row(i)))).g)
                        .collect(),
                ),
                (Family::MultiLogistic { classes }, SamplingMethod::GradientNorm) => Correction::Offsets(
                    rows.iter()
                        .map(|&i| gradient_norm_offsets(&softmax(&model.class_predictors(beta, data.row(i))), classes))
                        .collect(),
                ),
                (Family::MultiLogistic { .. }, m) => {
                    return Err(Error::InvalidArgument(format!("sampling `{}` is not supported for multi-class MSCLE", m.name())))
                }
                (Family::Poisson, SamplingMethod::GradientNorm | SamplingMethod::UnifiedGlm(_)) => Correction::Kappa(
                    rows.iter().map(|&i| model.univariate_terms(dot(beta, data.row(i))).mu).collect(),
                ),
                (_, SamplingMethod::GradientNorm | SamplingMethod::UnifiedGlm(_)) => Correction::Binary(
                    rows.iter()
                        .map(|&i| model.binary_probabilities(dot(beta, data.row(i))).expect("binary family"))
                        .collect(),
                ),
                (_, m) => {
                    return Err(Error::InvalidArgument(format!("sampling `{}` is not supported for {}", m.name(), model.family)))
                }
            }
        };
        Ok(Self { model, data, rows, correction, curvature: Curvature::Fisher })
    }

    /// Multi-class objective with explicit per-row offsets (one length-K vector per selected row).
    pub fn with_offsets(model: &'a GlmModel, data: &'a Dataset, draw: &SubsampleDraw, offsets: Vec<Vec<f64>>) -> Result<Self> {
        let k = model
            .classes()
            .ok_or_else(|| Error::InvalidArgument("offsets need the multi-class family".into()))?;
        let rows = draw.selected();
        if rows.is_empty() {
            return Err(Error::EmptySubsample);
        }
        if offsets.len() != rows.len() || offsets.iter().any(|g| g.len() != k) {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: offsets.len() });
        }
        Ok(Self { model, data, rows, correction: Correction::Offsets(offsets), curvature: Curvature::Fisher })
    }

    pub fn with_curvature(mut self, curvature: Curvature) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Whether the objective differs from the complete-case likelihood.
    pub fn is_corrected(&self) -> bool {
        !matches!(self.correction, Correction::None)
    }

    /// `(log kappa0, y - E_S y, Var_S y)` of selected row `k` at `eta`, or
    /// `None` without a correction.
    fn row_moments(&self, k: usize, eta: f64, y: f64) -> Result<Option<(f64, f64, f64)>> {
        let (m, resid, var) = match &self.correction {
            Correction::Kappa(pilot_mean) => {
                let m = poisson_kappas(eta.exp(), pilot_mean[k]);
                (m, y - m.tilted_mean(), m.tilted_variance())
            }
            Correction::Binary(pilot) => {
                let (p, q) = self.model.binary_probabilities(eta).expect("binary family");
                let (pt, qt) = pilot[k];
                let m = binary_kappas_complement(p, q, pt, qt);
                // tilted Pr(y = 1) and its complement
                let r = m.kappa1 / m.kappa0;
                let s = q * pt / m.kappa0;
                (m, if y == 1.0 { s } else { -r }, r * s)
            }
            _ => return Ok(None),
        };
        if !(m.kappa0 >= KAPPA0_FLOOR) {
            return Err(Error::DegenerateRow { row: self.rows[k], kappa0: m.kappa0 });
        }
        Ok(Some((m.kappa0.ln(), resid, var)))
    }

    fn offsets(&self, k: usize) -> Option<&[f64]> {
        match &self.correction {
            Correction::Offsets(g) => Some(&g[k]),
            _ => None,
        }
    }

    /// Univariate residual `(y - E_S y) b'/phi` and curvature weight.
    fn univariate_row(&self, k: usize, beta: &[f64]) -> Result<(f64, f64)> {
        let i = self.rows[k];
        let x = self.data.row(i);
        let y = self.data.response(i);
        let phi = self.model.dispersion;
        let eta = dot(beta, x);
        let t = self.model.univariate_terms(eta);
        let (raw, var) = match self.row_moments(k, eta, y)? {
            Some((_, r, v)) => (r, v),
            None => (y - t.mu, t.variance),
        };
        let mut weight = var * t.b1 * t.b1 / (phi * phi);
        if self.curvature == Curvature::Full {
            weight -= raw * t.b2 / phi;
        }
        Ok((raw * t.b1 / phi, weight))
    }

    fn multiclass_probs(&self, k: usize, beta: &[f64]) -> Vec<f64> {
        let mut eta = self.model.class_predictors(beta, self.data.row(self.rows[k]));
        if let Some(g) = self.offsets(k) {
            for (e, o) in eta.iter_mut().zip(g) {
                *e += o;
            }
        }
        softmax(&eta)
    }

    /// Corrected per-row scores at `beta`, one vector per selected row.
    pub fn row_scores(&self, beta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.data.n_features();
        (0..self.rows.len())
            .map(|k| {
                let i = self.rows[k];
                let x = self.data.row(i);
                match self.model.family {
                    Family::MultiLogistic { classes } => {
                        let p = self.multiclass_probs(k, beta);
                        let y = self.data.response(i);
                        let mut s = vec![0.0; (classes - 1) * d];
                        for c in 0..classes - 1 {
                            let r = indicator(y, c) - p[c];
                            for j in 0..d {
                                s[c * d + j] = r * x[j];
                            }
                        }
                        Ok(s)
                    }
                    _ => {
                        let (r, _) = self.univariate_row(k, beta)?;
                        Ok(x.iter().map(|v| r * v).collect())
                    }
                }
            })
            .collect()
    }
}

/// Offsets for gradient-norm sampling of a multi-class response: the score of
/// class `k` has norm `||(e_k - p)_{-K}|| ||x||`.
fn gradient_norm_offsets(p: &[f64], classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|k| {
            let s: f64 = (0..classes - 1)
                .map(|l| {
                    let r = if l == k { 1.0 - p[l] } else { -p[l] };
                    r * r
                })
                .sum();
            0.5 * s.ln()
        })
        .collect()
}

impl Objective for MscleObjective<'_> {
    fn dim(&self) -> usize {
        self.model.coef_dim(self.data.n_features())
    }

    fn scale(&self) -> f64 {
        self.rows.len() as f64
    }

    fn value(&self, beta: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (k, &i) in self.rows.iter().enumerate() {
            let x = self.data.row(i);
            let y = self.data.response(i);
            total += match self.model.family {
                Family::MultiLogistic { .. } => {
                    let mut eta = self.model.class_predictors(beta, x);
                    let own = eta[y as usize];
                    if let Some(g) = self.offsets(k) {
                        for (e, o) in eta.iter_mut().zip(g) {
                            *e += o;
                        }
                    }
                    own - log_sum_exp(&eta)
                }
                _ => {
                    let lf = self.model.log_density(beta, x, y)?;
                    match self.row_moments(k, dot(beta, x), y)? {
                        Some((log_kappa0, _, _)) => lf - log_kappa0,
                        None => lf,
                    }
                }
            };
        }
        Ok(total)
    }

    fn derivatives(&self, beta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        let d = self.data.n_features();
        let mut grad = vec![0.0; dim];
        let mut info = vec![0.0; dim * dim];
        for (k, &i) in self.rows.iter().enumerate() {
            let x = self.data.row(i);
            match self.model.family {
                Family::MultiLogistic { classes } => {
                    let p = self.multiclass_probs(k, beta);
                    let y = self.data.response(i);
                    for c in 0..classes - 1 {
                        let r = indicator(y, c) - p[c];
                        for j in 0..d {
                            grad[c * d + j] += r * x[j];
                        }
                    }
                    add_kron_outer(&mut info, &softmax_weight(&p, classes - 1), classes - 1, x, 1.0);
                }
                _ => {
                    let (r, w) = self.univariate_row(k, beta)?;
                    for j in 0..d {
                        grad[j] += r * x[j];
                    }
                    add_outer(&mut info, x, w);
                }
            }
        }
        Ok((DVector::from_vec(grad), DMatrix::from_row_slice(dim, dim, &info)))
    }
}
