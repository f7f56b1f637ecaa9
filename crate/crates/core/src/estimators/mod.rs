//! Subsample estimators: inverse-probability weighted, naive complete-case,
//! and the maximum sampled conditional likelihood estimator (MSCLE).
//!
//! The MSCLE maximises `sum_i delta_i [log f(y_i | x_i) - log pibar(x_i)]`
//! where `pibar(x) = E{pi(x, y) | x}`. For the probabilities in
//! [`crate::subsampling`] the x-only factors of `pi` cancel and `pibar`
//! reduces to closed-form moments. The adjustment ignores the `min(1, .)`
//! truncation, which is negligible when `n` is small relative to `N`.

mod moments;
mod objective;

pub use moments::{
    binary_kappas, binary_kappas_complement, multiclass_adjustment, poisson_cdf, poisson_kappas, poisson_q, ConditionalMoments,
    MultiClassAdjustment,
};
pub use objective::{Curvature, MscleObjective};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::glm::{maximize, weighted_mle, Family, FitOptions, FitResult, GlmModel, RowSet};
use crate::subsampling::{PilotEstimate, SubsampleDraw, SubsamplePlan};
use crate::Dataset;

/// Estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mscle,
    Weighted,
    Naive,
    /// Unweighted MLE on a separate uniform subsample of the same expected size.
    Uniform,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mscle, Method::Weighted, Method::Naive, Method::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mscle => "mscle",
            Method::Weighted => "weighted",
            Method::Naive => "naive",
            Method::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mscle" => Ok(Method::Mscle),
            "weighted" => Ok(Method::Weighted),
            "naive" => Ok(Method::Naive),
            "uniform" => Ok(Method::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_draw(data: &Dataset, draw: &SubsampleDraw) -> Result<Vec<usize>> {
    if draw.indicators.len() != data.n_rows() {
        return Err(Error::DimensionMismatch { expected: data.n_rows(), found: draw.indicators.len() });
    }
    if draw.is_empty() {
        return Err(Error::EmptySubsample);
    }
    Ok(draw.selected())
}

fn check_plan(data: &Dataset, plan: &SubsamplePlan) -> Result<()> {
    if plan.len() != data.n_rows() {
        return Err(Error::DimensionMismatch { expected: data.n_rows(), found: plan.len() });
    }
    Ok(())
}

/// Maximises `sum_i delta_i l(beta; x_i, y_i) / pi_i`.
pub fn weighted_fit(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    check_plan(data, plan)?;
    let rows = check_draw(data, draw)?;
    let mut weights = Vec::with_capacity(rows.len());
    for &i in &rows {
        let p = plan.probabilities[i];
        if !(p > 0.0) {
            return Err(Error::ZeroProbabilitySelected { row: i });
        }
        weights.push(1.0 / p);
    }
    let mut fit = weighted_mle(model, data, &RowSet { rows, weights }, init, opts)?;
    fit.covariance = None;
    Ok(fit)
}

/// Unweighted MLE on the selected rows.
pub fn naive_fit(model: &GlmModel, data: &Dataset, draw: &SubsampleDraw, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let rows = check_draw(data, draw)?;
    let mut fit = weighted_mle(model, data, &RowSet::unweighted(rows), init, opts)?;
    fit.covariance = None;
    Ok(fit)
}

fn fit_objective(obj: &MscleObjective, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    maximize(obj, init, opts)
}

/// MSCLE for binary responses (logistic or a general inverse link) using
/// Fisher-scoring curvature.
pub fn mscle_fit_binary(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    mscle_fit_binary_with(model, data, plan, draw, pilot, init, opts, Curvature::Fisher)
}

/// [`mscle_fit_binary`] with a choice between Fisher and full-Hessian curvature.
#[allow(clippy::too_many_arguments)]
pub fn mscle_fit_binary_with(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
    curvature: Curvature,
) -> Result<FitResult> {
    if !model.is_binary() {
        return Err(Error::InvalidArgument(format!("binary MSCLE called with family {}", model.family)));
    }
    let obj = MscleObjective::new(model, data, plan, draw, pilot)?.with_curvature(curvature);
    fit_objective(&obj, init, opts)
}

/// MSCLE for multi-class logistic regression.
pub fn mscle_fit_multiclass(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if model.classes().is_none() {
        return Err(Error::InvalidArgument(format!("multi-class MSCLE called with family {}", model.family)));
    }
    let obj = MscleObjective::new(model, data, plan, draw, pilot)?;
    fit_objective(&obj, init, opts)
}

/// MSCLE for Poisson regression.
pub fn mscle_fit_poisson(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if model.family != Family::Poisson {
        return Err(Error::InvalidArgument(format!("Poisson MSCLE called with family {}", model.family)));
    }
    let obj = MscleObjective::new(model, data, plan, draw, pilot)?;
    fit_objective(&obj, init, opts)
}

/// MSCLE for any supported family.
pub fn mscle_fit(
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = MscleObjective::new(model, data, plan, draw, pilot)?;
    fit_objective(&obj, init, opts)
}

/// Logistic MSCLE by the shift construction: fit the uncorrected logistic
/// likelihood on the subsample and add the pilot coefficients.
pub fn logistic_shift_fit(
    data: &Dataset,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let model = GlmModel::logistic();
    let shifted_init: Vec<f64> = init.iter().zip(pilot.beta.iter()).map(|(a, b)| a - b).collect();
    let mut fit = naive_fit(&model, data, draw, &shifted_init, opts)?;
    let coef: Vec<f64> = fit.coefficients.iter().zip(pilot.beta.iter()).map(|(g, b)| g + b).collect();
    fit.coefficients = coef.into();
    Ok(fit)
}

/// Runs one estimator on a shared plan and draw. `Uniform` is not handled
/// here because it requires its own draw; use [`naive_fit`] on a uniform draw.
#[allow(clippy::too_many_arguments)]
pub fn fit_method(
    method: Method,
    model: &GlmModel,
    data: &Dataset,
    plan: &SubsamplePlan,
    draw: &SubsampleDraw,
    pilot: &PilotEstimate,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    match method {
        Method::Mscle => mscle_fit(model, data, plan, draw, pilot, init, opts),
        Method::Weighted => weighted_fit(model, data, plan, draw, init, opts),
        Method::Naive => naive_fit(model, data, draw, init, opts),
        Method::Uniform => Err(Error::InvalidArgument("uniform estimator needs a uniform draw".into())),
    }
}
