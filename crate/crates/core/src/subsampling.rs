//! Informative subsampling probabilities and the independent-Bernoulli draw.
//!
//! Probabilities follow `pi_i = min(1, n s_i / (N psi))` where `s_i` is a
//! per-row sampling statistic evaluated at the pilot coefficients and `psi`
//! is the pilot-sample mean of the same statistic.
//!
//! Rows whose statistic vanishes (for example `y_i` equal to the pilot mean)
//! get probability exactly zero. They can never be selected, so they never
//! enter any estimator; no positive floor is imposed.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    dot, linalg::invert_spd, softmax, weighted_mle, Coefficients, Dataset, Family, FitOptions, GlmModel, RowSet,
};

/// Covariate criterion `h(x)` of the unified GLM probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HVariant {
    /// `h = 1` (local case-control for binary responses).
    Ones,
    /// `h = ||x||` (L-optimal).
    XNorm,
    /// `h = ||F^{-1} x||` with `F` the pilot Fisher information (A-optimal).
    AOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "h", rename_all = "snake_case")]
pub enum SamplingMethod {
    /// Norm of the per-observation score.
    GradientNorm,
    /// `|y - mu| |b'(eta)| h(x)` for univariate GLMs.
    UnifiedGlm(HVariant),
    /// `||y - p(x)|| ||x||` for multi-class logistic regression.
    MultiClassLopt,
    /// Constant statistic; non-informative.
    Uniform,
}

impl SamplingMethod {
    /// Parses the CLI names `gradnorm`, `lcc`, `lopt`, `aopt`, `uniform`.
    /// `lopt` resolves to the multi-class probabilities for multi-class models.
    pub fn parse(s: &str, model: &GlmModel) -> Result<Self> {
        let multi = model.classes().is_some();
        Ok(match s {
            "gradnorm" => SamplingMethod::GradientNorm,
            "lcc" if !multi => SamplingMethod::UnifiedGlm(HVariant::Ones),
            "lopt" if multi => SamplingMethod::MultiClassLopt,
            "lopt" => SamplingMethod::UnifiedGlm(HVariant::XNorm),
            "aopt" if !multi => SamplingMethod::UnifiedGlm(HVariant::AOpt),
            "uniform" => SamplingMethod::Uniform,
            other => {
                return Err(Error::InvalidArgument(format!("sampling `{other}` is not available for {}", model.family)))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingMethod::GradientNorm => "gradnorm",
            SamplingMethod::UnifiedGlm(HVariant::Ones) => "lcc",
            SamplingMethod::UnifiedGlm(HVariant::XNorm) => "lopt",
            SamplingMethod::UnifiedGlm(HVariant::AOpt) => "aopt",
            SamplingMethod::MultiClassLopt => "lopt",
            SamplingMethod::Uniform => "uniform",
        }
    }

    pub fn h_variant(&self) -> Option<HVariant> {
        match self {
            SamplingMethod::UnifiedGlm(h) => Some(*h),
            _ => None,
        }
    }

    /// Errors when the statistic is not defined for the model family.
    pub fn check_family(&self, model: &GlmModel) -> Result<()> {
        let multi = model.classes().is_some();
        match self {
            SamplingMethod::UnifiedGlm(_) if multi => Err(Error::InvalidArgument(
                "unified GLM probabilities need a univariate family".into(),
            )),
            SamplingMethod::MultiClassLopt if !multi => {
                Err(Error::InvalidArgument("multi-class probabilities need the multi-class family".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Pilot coefficients and the normalizer of the sampling statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimate {
    pub beta: Coefficients,
    pub psi: f64,
    pub pilot_size: usize,
    /// Dataset rows used for the pilot fit.
    pub rows: Vec<usize>,
    /// Statistic whose mean `psi` is.
    pub method: SamplingMethod,
    /// Pilot-average Fisher information, used by the A-optimal criterion.
    #[serde(with = "crate::serde_matrix")]
    pub information: DMatrix<f64>,
}

impl PilotEstimate {
    /// Builds a pilot from known coefficients, computing `psi` and the
    /// information matrix on `rows`.
    pub fn from_coefficients(
        model: &GlmModel,
        data: &Dataset,
        beta: Coefficients,
        rows: Vec<usize>,
        method: SamplingMethod,
    ) -> Result<Self> {
        method.check_family(model)?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("pilot needs at least one row".into()));
        }
        let dim = model.coef_dim(data.n_features());
        if beta.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: beta.len() });
        }
        let mut info = DMatrix::zeros(dim, dim);
        for &i in &rows {
            info += DMatrix::from_row_slice(dim, dim, &model.information(&beta, data.row(i))?);
        }
        info /= rows.len() as f64;
        let mut pilot = Self { beta, psi: 0.0, pilot_size: rows.len(), rows, method, information: info };
        let stat = StatisticEvaluator::new(model, &pilot)?;
        let total: f64 = pilot
            .rows
            .iter()
            .map(|&i| stat.eval(data.row(i), data.response(i)))
            .sum::<Result<f64>>()?;
        pilot.psi = total / pilot.rows.len() as f64;
        Ok(pilot)
    }

    /// Same coefficients with `psi` re-derived for another statistic.
    pub fn for_method(&self, model: &GlmModel, data: &Dataset, method: SamplingMethod) -> Result<Self> {
        Self::from_coefficients(model, data, self.beta.clone(), self.rows.clone(), method)
    }
}

/// Evaluates the unnormalised sampling statistic at fixed pilot coefficients.
struct StatisticEvaluator<'a> {
    model: &'a GlmModel,
    beta: &'a [f64],
    method: SamplingMethod,
    a_metric: Option<DMatrix<f64>>,
}

impl<'a> StatisticEvaluator<'a> {
    fn new(model: &'a GlmModel, pilot: &'a PilotEstimate) -> Result<Self> {
        let a_metric = match pilot.method {
            SamplingMethod::UnifiedGlm(HVariant::AOpt) => Some(invert_spd(&pilot.information)?),
            _ => None,
        };
        Ok(Self { model, beta: &pilot.beta, method: pilot.method, a_metric })
    }

    fn eval(&self, x: &[f64], y: f64) -> Result<f64> {
        self.model.check_dims(self.beta, x)?;
        Ok(match self.method {
            SamplingMethod::Uniform => 1.0,
            SamplingMethod::GradientNorm => norm(&self.model.score(self.beta, x, y)?),
            SamplingMethod::UnifiedGlm(h) => {
                let t = self.model.univariate_terms(dot(self.beta, x));
                let hx = match h {
                    HVariant::Ones => 1.0,
                    HVariant::XNorm => norm(x),
                    HVariant::AOpt => {
                        let m = self.a_metric.as_ref().expect("A-optimal metric");
                        (m * DVector::from_column_slice(x)).norm()
                    }
                };
                (y - t.mu).abs() * t.b1.abs() * hx
            }
            SamplingMethod::MultiClassLopt => {
                let p = softmax(&self.model.class_predictors(self.beta, x));
                let resid: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| {
                        let r = if y as usize == k { 1.0 - pk } else { -pk };
                        r * r
                    })
                    .sum();
                resid.sqrt() * norm(x)
            }
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Per-row inclusion probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub probabilities: Vec<f64>,
    pub target_avg_size: f64,
    pub method: SamplingMethod,
    /// Unnormalised statistic per row (rows excluded from the pool hold 0).
    pub statistic: Vec<f64>,
    /// `N * psi`: probabilities are `min(1, n * statistic / normalizer)`.
    pub normalizer: f64,
}

impl SubsamplePlan {
    fn from_statistic(statistic: Vec<f64>, normalizer: f64, n: f64, method: SamplingMethod) -> Self {
        let probabilities = statistic.iter().map(|s| (n * s / normalizer).min(1.0)).collect();
        Self { probabilities, target_avg_size: n, method, statistic, normalizer }
    }

    pub fn h_variant(&self) -> Option<HVariant> {
        self.method.h_variant()
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Expected subsample size `sum_i pi_i`.
    pub fn expected_size(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// The same statistic at another target size.
    pub fn rescaled(&self, n: f64) -> Result<Self> {
        check_target(n)?;
        Ok(Self::from_statistic(self.statistic.clone(), self.normalizer, n, self.method))
    }

    /// Removes `rows` from the sampling pool (probability zero).
    pub fn exclude(mut self, rows: &[usize]) -> Self {
        for &i in rows {
            self.probabilities[i] = 0.0;
            self.statistic[i] = 0.0;
        }
        self
    }

    /// Replaces the pilot normalizer by the pool mean of the statistic, so
    /// that the untruncated probabilities sum to exactly `n`.
    pub fn calibrated(&self) -> Result<Self> {
        let total: f64 = self.statistic.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegeneratePilot);
        }
        Ok(Self::from_statistic(self.statistic.clone(), total, self.target_avg_size, self.method))
    }
}

fn check_target(n: f64) -> Result<()> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("target subsample size must be >= 1, got {n}")));
    }
    Ok(())
}

/// Indicators of an independent-Bernoulli draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    pub indicators: Vec<bool>,
    pub realized_size: usize,
    /// Seed of the stream the draw came from, when known.
    pub seed: Option<u64>,
}

impl SubsampleDraw {
    pub fn from_indicators(indicators: Vec<bool>) -> Self {
        let realized_size = indicators.iter().filter(|&&b| b).count();
        Self { indicators, realized_size, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn selected(&self) -> Vec<usize> {
        self.indicators.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.realized_size == 0
    }
}

fn check_pilot_degeneracy(model: &GlmModel, data: &Dataset, rows: &[usize]) -> Result<()> {
    let ys: Vec<f64> = rows.iter().map(|&i| data.response(i)).collect();
    match model.family {
        Family::Logistic | Family::BinaryLink { .. } => {
            if ys.iter().all(|&y| y == ys[0]) {
                return Err(Error::PilotFailure("pilot sample contains a single response class".into()));
            }
        }
        Family::MultiLogistic { classes } => {
            let mut seen = vec![false; classes];
            for &y in &ys {
                seen[y as usize] = true;
            }
            if let Some(k) = seen.iter().position(|s| !s) {
                return Err(Error::PilotFailure(format!("class {k} is absent from the pilot sample")));
            }
        }
        Family::Poisson => {
            if ys.iter().all(|&y| y == 0.0) {
                return Err(Error::PilotFailure("all pilot counts are zero".into()));
            }
        }
    }
    Ok(())
}

/// Fits the pilot on a uniform sample of `pilot_size` rows drawn without replacement.
pub fn pilot_fit<R: Rng + ?Sized>(
    model: &GlmModel,
    data: &Dataset,
    pilot_size: usize,
    method: SamplingMethod,
    rng: &mut R,
) -> Result<PilotEstimate> {
    let n = data.n_rows();
    let d = data.n_features();
    if pilot_size < d + 1 || pilot_size > n {
        return Err(Error::InvalidArgument(format!(
            "pilot size {pilot_size} must lie in [{}, {n}]",
            d + 1
        )));
    }
    let mut rows = sample(rng, n, pilot_size).into_vec();
    rows.sort_unstable();
    pilot_fit_rows(model, data, rows, method)
}

/// Pilot fit on explicit rows.
pub fn pilot_fit_rows(model: &GlmModel, data: &Dataset, rows: Vec<usize>, method: SamplingMethod) -> Result<PilotEstimate> {
    method.check_family(model)?;
    for &i in &rows {
        model.validate_response(data.response(i))?;
    }
    check_pilot_degeneracy(model, data, &rows)?;
    let dim = model.coef_dim(data.n_features());
    let opts = FitOptions { divergence_bound: 1e3, ..FitOptions::default() };
    let fit = weighted_mle(model, data, &RowSet::unweighted(rows.clone()), &vec![0.0; dim], &opts)
        .map_err(|e| Error::PilotFailure(format!("pilot fit failed: {e}")))?;
    if !fit.converged || !fit.coefficients.is_finite() {
        return Err(Error::PilotFailure(format!(
            "pilot fit did not converge after {} iterations (gradient norm {:e})",
            fit.iterations, fit.final_gradient_norm
        )));
    }
    PilotEstimate::from_coefficients(model, data, fit.coefficients, rows, method)
}

fn plan_for(model: &GlmModel, data: &Dataset, pilot: &PilotEstimate, n: f64, method: SamplingMethod) -> Result<SubsamplePlan> {
    check_target(n)?;
    method.check_family(model)?;
    if pilot.method != method {
        return Err(Error::InvalidArgument(format!(
            "pilot normalizer was computed for `{}`, not `{}`",
            pilot.method.name(),
            method.name()
        )));
    }
    if !(pilot.psi > 0.0) || !pilot.psi.is_finite() {
        return Err(Error::DegeneratePilot);
    }
    if !pilot.beta.is_finite() {
        return Err(Error::InvalidArgument("pilot coefficients must be finite".into()));
    }
    let stat = StatisticEvaluator::new(model, pilot)?;
    let statistic = (0..data.n_rows())
        .map(|i| stat.eval(data.row(i), data.response(i)))
        .collect::<Result<Vec<f64>>>()?;
    let normalizer = data.n_rows() as f64 * pilot.psi;
    Ok(SubsamplePlan::from_statistic(statistic, normalizer, n, method))
}

/// `pi_i = min(1, n ||score(beta_plt; x_i, y_i)|| / (N psi))`.
pub fn gradient_norm_probabilities(model: &GlmModel, data: &Dataset, pilot: &PilotEstimate, n: f64) -> Result<SubsamplePlan> {
    plan_for(model, data, pilot, n, SamplingMethod::GradientNorm)
}

/// `pi_i = min(1, n |y_i - mu_i| |b'(eta_i)| h(x_i) / (N psi))`.
pub fn unified_glm_probabilities(
    model: &GlmModel,
    data: &Dataset,
    pilot: &PilotEstimate,
    n: f64,
    h: HVariant,
) -> Result<SubsamplePlan> {
    plan_for(model, data, pilot, n, SamplingMethod::UnifiedGlm(h))
}

/// `pi_i = min(1, n ||y_i - p(x_i)|| ||x_i|| / (N psi))` for multi-class responses.
pub fn multiclass_probabilities(model: &GlmModel, data: &Dataset, pilot: &PilotEstimate, n: f64) -> Result<SubsamplePlan> {
    plan_for(model, data, pilot, n, SamplingMethod::MultiClassLopt)
}

/// Constant probabilities `min(1, n / N)`.
pub fn uniform_probabilities(data: &Dataset, n: f64) -> Result<SubsamplePlan> {
    check_target(n)?;
    let statistic = vec![1.0; data.n_rows()];
    Ok(SubsamplePlan::from_statistic(statistic, data.n_rows() as f64, n, SamplingMethod::Uniform))
}

/// Dispatches on `pilot.method`.
pub fn plan_probabilities(model: &GlmModel, data: &Dataset, pilot: &PilotEstimate, n: f64) -> Result<SubsamplePlan> {
    match pilot.method {
        SamplingMethod::Uniform => uniform_probabilities(data, n),
        m => plan_for(model, data, pilot, n, m),
    }
}

/// Independent Bernoulli(pi_i) per row.
pub fn draw_subsample<R: Rng + ?Sized>(plan: &SubsamplePlan, rng: &mut R) -> SubsampleDraw {
    let indicators = plan.probabilities.iter().map(|&p| rng.random::<f64>() < p).collect();
    SubsampleDraw::from_indicators(indicators)
}

/// Shifts every pilot coefficient by an independent U(1, 2) draw and
/// re-derives the normalizer on the pilot rows.
pub fn misspecify_pilot<R: Rng + ?Sized>(
    model: &GlmModel,
    data: &Dataset,
    pilot: &PilotEstimate,
    rng: &mut R,
) -> Result<PilotEstimate> {
    let shift = Uniform::new(1.0, 2.0).expect("valid range");
    let beta: Vec<f64> = pilot.beta.iter().map(|b| b + shift.sample(rng)).collect();
    PilotEstimate::from_coefficients(model, data, Coefficients::new(beta), pilot.rows.clone(), pilot.method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_logistic() -> Dataset {
        let raw = [-1.0, -0.5, 0.2, 0.4, 1.3, 2.0, -0.3, 0.8];
        let y = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        Dataset::with_intercept(&raw, y, 1).unwrap()
    }

    fn pilot_with(model: &GlmModel, data: &Dataset, beta: Vec<f64>, method: SamplingMethod) -> PilotEstimate {
        PilotEstimate::from_coefficients(model, data, Coefficients::new(beta), (0..data.n_rows()).collect(), method)
            .unwrap()
    }

    #[test]
    fn separable_pilot_fails() {
        let raw = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let data = Dataset::with_intercept(&raw, y, 1).unwrap();
        let err = pilot_fit_rows(&GlmModel::logistic(), &data, (0..6).collect(), SamplingMethod::GradientNorm);
        assert!(matches!(err, Err(Error::PilotFailure(_))), "{err:?}");
    }

    #[test]
    fn single_class_pilot_fails() {
        let data = Dataset::with_intercept(&[0.1, 0.2, 0.3], vec![1.0, 1.0, 1.0], 1).unwrap();
        let err = pilot_fit_rows(&GlmModel::logistic(), &data, vec![0, 1, 2], SamplingMethod::GradientNorm);
        assert!(matches!(err, Err(Error::PilotFailure(_))));
    }

    #[test]
    fn full_pilot_equals_mle() {
        let data = toy_logistic();
        let model = GlmModel::logistic();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let pilot = pilot_fit(&model, &data, data.n_rows(), SamplingMethod::GradientNorm, &mut rng).unwrap();
        let mle = crate::glm::fisher_scoring_mle(&model, &data, &[0.0, 0.0], &FitOptions::default()).unwrap();
        for (a, b) in pilot.beta.iter().zip(mle.coefficients.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn poisson_intercept_psi_is_mean_abs_deviation() {
        let y = vec![0.0, 1.0, 2.0, 2.0, 3.0, 4.0];
        let data = Dataset::from_rows(vec![1.0; 6], y.clone(), 1).unwrap();
        let model = GlmModel::poisson();
        let pilot = pilot_fit_rows(&model, &data, (0..6).collect(), SamplingMethod::UnifiedGlm(HVariant::Ones)).unwrap();
        assert_relative_eq!(pilot.beta[0], 2.0f64.ln(), epsilon = 1e-10);
        let oracle = y.iter().map(|v| (v - 2.0).abs()).sum::<f64>() / 6.0;
        assert_relative_eq!(pilot.psi, oracle, epsilon = 1e-9);
    }

    #[test]
    fn zero_score_row_gets_zero_probability() {
        let model = GlmModel::poisson();
        // pilot mean exp(0) = 1 and row 0 has y = 1
        let data = Dataset::from_rows(vec![1.0; 3], vec![1.0, 3.0, 0.0], 1).unwrap();
        let pilot = pilot_with(&model, &data, vec![0.0], SamplingMethod::GradientNorm);
        let plan = gradient_norm_probabilities(&model, &data, &pilot, 1.0).unwrap();
        assert_eq!(plan.probabilities[0], 0.0);
    }

    #[test]
    fn truncation_and_ratios() {
        let model = GlmModel::poisson();
        let data = Dataset::from_rows(vec![1.0; 4], vec![1.0, 3.0, 5.0, 0.0], 1).unwrap();
        // statistics |y - 1| = 0, 2, 4, 1; psi = 7/4
        let pilot = pilot_with(&model, &data, vec![0.0], SamplingMethod::GradientNorm);
        let plan = gradient_norm_probabilities(&model, &data, &pilot, 1.0).unwrap();
        assert_relative_eq!(plan.probabilities[1] / plan.probabilities[3], 2.0, epsilon = 1e-14);
        assert_relative_eq!(plan.probabilities[2], 4.0 / 7.0, epsilon = 1e-14);
        // n s / (N psi) = 3.2 * 4 / 7 * ... at n large enough the top row truncates
        let big = plan.rescaled(5.6).unwrap();
        assert_relative_eq!(5.6 * 4.0 / 7.0, 3.2, epsilon = 1e-12);
        assert_eq!(big.probabilities[2], 1.0);
    }

    #[test]
    fn zero_psi_is_degenerate() {
        let model = GlmModel::poisson();
        let data = Dataset::from_rows(vec![1.0; 3], vec![1.0, 1.0, 1.0], 1).unwrap();
        let pilot = pilot_with(&model, &data, vec![0.0], SamplingMethod::GradientNorm);
        assert_eq!(pilot.psi, 0.0);
        assert_eq!(gradient_norm_probabilities(&model, &data, &pilot, 1.0), Err(Error::DegeneratePilot));
    }

    #[test]
    fn confident_correct_rows_rarely_sampled() {
        let model = GlmModel::logistic();
        let eps: f64 = 1e-6;
        let eta = ((1.0 - eps) / eps).ln();
        let data = Dataset::from_rows(vec![1.0, 1.0], vec![1.0, 0.0], 1).unwrap();
        let pilot = pilot_with(&model, &data, vec![eta], SamplingMethod::UnifiedGlm(HVariant::Ones));
        let plan = unified_glm_probabilities(&model, &data, &pilot, 1.0, HVariant::Ones).unwrap();
        assert_relative_eq!(plan.probabilities[0] / plan.probabilities[1], eps / (1.0 - eps), max_relative = 1e-8);
    }

    #[test]
    fn canonical_xnorm_equals_gradient_norm() {
        let model = GlmModel::logistic();
        let data = toy_logistic();
        let beta = vec![0.3, -0.7];
        let g = pilot_with(&model, &data, beta.clone(), SamplingMethod::GradientNorm);
        let u = pilot_with(&model, &data, beta, SamplingMethod::UnifiedGlm(HVariant::XNorm));
        let pg = gradient_norm_probabilities(&model, &data, &g, 3.0).unwrap();
        let pu = unified_glm_probabilities(&model, &data, &u, 3.0, HVariant::XNorm).unwrap();
        for (a, b) in pg.probabilities.iter().zip(&pu.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_get_equal_probabilities() {
        let model = GlmModel::logistic();
        let data = Dataset::from_rows([1.0, 0.5].repeat(20), vec![1.0; 20], 2).unwrap();
        let pilot = pilot_with(&model, &data, vec![0.1, 0.2], SamplingMethod::UnifiedGlm(HVariant::Ones));
        let plan = unified_glm_probabilities(&model, &data, &pilot, 2.0, HVariant::Ones).unwrap();
        for p in &plan.probabilities {
            assert_relative_eq!(*p, 0.1, epsilon = 1e-14);
        }
    }

    #[test]
    fn multiclass_certain_class_gets_zero() {
        let model = GlmModel::multi_logistic(3).unwrap();
        // class 0 predictor huge so p = (1, 0, 0) to machine precision
        let data = Dataset::from_rows(vec![1.0, 1.0], vec![0.0, 1.0], 1).unwrap();
        let pilot = pilot_with(&model, &data, vec![800.0, 0.0], SamplingMethod::MultiClassLopt);
        let plan = multiclass_probabilities(&model, &data, &pilot, 1.0).unwrap();
        assert_eq!(plan.probabilities[0], 0.0);
        assert!(plan.probabilities[1] > 0.0);
    }

    #[test]
    fn multiclass_two_classes_matches_binary_xnorm() {
        let data = toy_logistic();
        let logistic = GlmModel::logistic();
        let multi = GlmModel::multi_logistic(2).unwrap();
        // binary y = 1 corresponds to multi-class label 0
        let labels: Vec<f64> = data.responses().iter().map(|y| 1.0 - y).collect();
        let mdata = Dataset::from_rows(data.rows_flat().to_vec(), labels, 2).unwrap();
        let beta = vec![0.2, -0.4];
        let b = pilot_with(&logistic, &data, beta.clone(), SamplingMethod::UnifiedGlm(HVariant::XNorm));
        let m = pilot_with(&multi, &mdata, beta, SamplingMethod::MultiClassLopt);
        assert_relative_eq!(m.psi, b.psi * 2f64.sqrt(), epsilon = 1e-14);
        let pb = unified_glm_probabilities(&logistic, &data, &b, 2.0, HVariant::XNorm).unwrap();
        let pm = multiclass_probabilities(&multi, &mdata, &m, 2.0).unwrap();
        for (a, c) in pb.probabilities.iter().zip(&pm.probabilities) {
            assert_relative_eq!(a, c, epsilon = 1e-14);
        }
    }

    #[test]
    fn multiclass_uniform_pilot_proportional_to_xnorm() {
        let model = GlmModel::multi_logistic(3).unwrap();
        let raw = [0.5, 1.0, -2.0, 0.0, 3.0, 1.0];
        let data = Dataset::with_intercept(&raw, vec![0.0, 1.0, 2.0], 2).unwrap();
        let pilot = pilot_with(&model, &data, vec![0.0; 6], SamplingMethod::MultiClassLopt);
        let plan = multiclass_probabilities(&model, &data, &pilot, 1.0).unwrap();
        let xn: Vec<f64> = (0..3).map(|i| norm(data.row(i))).collect();
        for i in 1..3 {
            assert_relative_eq!(plan.probabilities[i] / plan.probabilities[0], xn[i] / xn[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn draws_at_the_extremes() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let all = SubsamplePlan::from_statistic(vec![1.0; 50], 50.0, 50.0, SamplingMethod::Uniform);
        assert_eq!(draw_subsample(&all, &mut rng).realized_size, 50);
        let none = SubsamplePlan::from_statistic(vec![0.0; 50], 50.0, 50.0, SamplingMethod::Uniform);
        let d = draw_subsample(&none, &mut rng);
        assert!(d.is_empty());
    }

    #[test]
    fn bernoulli_concentration() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let plan = SubsamplePlan::from_statistic(vec![1.0; 100_000], 100_000.0, 30_000.0, SamplingMethod::Uniform);
        assert_relative_eq!(plan.probabilities[0], 0.3);
        let d = draw_subsample(&plan, &mut rng);
        assert!((d.realized_size as i64 - 30_000).abs() <= 500, "{}", d.realized_size);
        assert_eq!(d.realized_size, d.selected().len());
    }

    #[test]
    fn misspecified_shift_in_range_and_seeded() {
        let model = GlmModel::logistic();
        let data = toy_logistic();
        let pilot = pilot_with(&model, &data, vec![0.0, 0.0], SamplingMethod::GradientNorm);
        let a = misspecify_pilot(&model, &data, &pilot, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = misspecify_pilot(&model, &data, &pilot, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.beta.iter().all(|&v| v > 1.0 && v < 2.0));
        let rederived = pilot_with(&model, &data, a.beta.to_vec(), SamplingMethod::GradientNorm);
        assert_relative_eq!(a.psi, rederived.psi, epsilon = 1e-15);
    }

    #[test]
    fn calibrated_plan_sums_to_target() {
        let model = GlmModel::logistic();
        let data = toy_logistic();
        let pilot = pilot_with(&model, &data, vec![0.1, 0.5], SamplingMethod::GradientNorm);
        let plan = gradient_norm_probabilities(&model, &data, &pilot, 2.0).unwrap().calibrated().unwrap();
        assert_relative_eq!(plan.expected_size(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn method_mismatch_is_rejected() {
        let model = GlmModel::logistic();
        let data = toy_logistic();
        let pilot = pilot_with(&model, &data, vec![0.1, 0.5], SamplingMethod::GradientNorm);
        assert!(unified_glm_probabilities(&model, &data, &pilot, 2.0, HVariant::Ones).is_err());
        assert!(multiclass_probabilities(&model, &data, &pilot, 2.0).is_err());
    }
}
