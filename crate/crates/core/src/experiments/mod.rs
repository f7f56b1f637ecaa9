//! Monte Carlo harness: scenario presets, data generators, replication
//! loops and the bias/variance decomposition of the estimates.
//!
//! Every replication draws from its own RNG streams (see [`crate::rng`]), so
//! results do not depend on scheduling. Replications run on a rayon pool
//! whose size is capped by the `MSCLE_THREADS` environment variable.

mod generate;

pub use generate::{generate_covariates, generate_dataset, generate_responses, CovariateLaw};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_method, naive_fit, Method};
use crate::glm::{Coefficients, Dataset, FitOptions, GlmModel};
use crate::rng::{Purpose, RngStreams};
use crate::subsampling::{
    draw_subsample, misspecify_pilot, pilot_fit, plan_probabilities, uniform_probabilities, HVariant, PilotEstimate,
    SamplingMethod,
};
use crate::variance::{confidence_intervals, estimate_sigma_mscle, estimate_v_weighted};

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub model: GlmModel,
    /// Full-data size `N`.
    pub full_size: usize,
    pub n_grid: Vec<usize>,
    pub pilot_size: usize,
    pub replications: usize,
    pub covariate_law: CovariateLaw,
    pub beta_true: Coefficients,
    #[serde(default)]
    pub misspecified_pilot: bool,
    pub methods: Vec<Method>,
    pub sampling: SamplingMethod,
    /// Keep pilot rows eligible for the main subsample.
    #[serde(default)]
    pub pilot_overlap: bool,
    /// Also compute variance estimates, traces and interval coverage.
    #[serde(default)]
    pub variance: bool,
    #[serde(default = "default_level")]
    pub ci_level: f64,
}

fn default_level() -> f64 {
    0.95
}

const DESK_N: usize = 100_000;
const DESK_GRID: [usize; 3] = [500, 1000, 2000];
const DESK_R: usize = 200;
const PILOT_SIZE: usize = 400;

impl ScenarioSpec {
    /// Multi-class design: K = 3, d = 4, `beta = (0.05, 0.10, ..., 0.40)`.
    /// `case` selects the covariate law: `a` normal, `b` log-normal, `c` t3,
    /// `d` exponential.
    pub fn multiclass(case: char) -> Result<Self> {
        let law = match case {
            'a' => CovariateLaw::MvNormalAr { rho: 0.5 },
            'b' => CovariateLaw::MvLogNormal { rho: 0.5 },
            'c' => CovariateLaw::MvT { df: 3.0, rho: 0.5 },
            'd' => CovariateLaw::IidExp { rate: 1.0 },
            other => return Err(Error::InvalidArgument(format!("unknown multi-class scenario `{other}`"))),
        };
        Ok(Self {
            name: format!("multiclass_{case}"),
            model: GlmModel::multi_logistic(3)?,
            full_size: DESK_N,
            n_grid: DESK_GRID.to_vec(),
            pilot_size: PILOT_SIZE,
            replications: DESK_R,
            covariate_law: law,
            beta_true: (1..=8).map(|k| 0.05 * k as f64).collect::<Vec<_>>().into(),
            misspecified_pilot: false,
            methods: Method::ALL.to_vec(),
            sampling: SamplingMethod::MultiClassLopt,
            pilot_overlap: false,
            variance: false,
            ci_level: default_level(),
        })
    }

    /// Poisson design: d = 7, `beta = 0.25` throughout. `case`: `a` uniform,
    /// `b` Beta(2, 5), `c` normal, `d` exponential with rate 2.
    pub fn poisson(case: char) -> Result<Self> {
        let law = match case {
            'a' => CovariateLaw::IidUniform01,
            'b' => CovariateLaw::IidBeta { a: 2.0, b: 5.0 },
            'c' => CovariateLaw::MvNormalAr { rho: 0.5 },
            'd' => CovariateLaw::IidExp { rate: 2.0 },
            other => return Err(Error::InvalidArgument(format!("unknown Poisson scenario `{other}`"))),
        };
        Ok(Self {
            name: format!("poisson_{case}"),
            model: GlmModel::poisson(),
            full_size: DESK_N,
            n_grid: DESK_GRID.to_vec(),
            pilot_size: PILOT_SIZE,
            replications: DESK_R,
            covariate_law: law,
            beta_true: vec![0.25; 7].into(),
            misspecified_pilot: false,
            methods: Method::ALL.to_vec(),
            sampling: SamplingMethod::UnifiedGlm(HVariant::XNorm),
            pilot_overlap: false,
            variance: false,
            ci_level: default_level(),
        })
    }

    /// Preset by name, e.g. `multiclass_a` or `poisson_d`.
    pub fn preset(name: &str) -> Result<Self> {
        let unknown = || Error::InvalidArgument(format!("unknown scenario preset `{name}`"));
        let (family, case) = name.rsplit_once('_').ok_or_else(unknown)?;
        let mut chars = case.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(unknown());
        };
        match family {
            "multiclass" => Self::multiclass(c),
            "poisson" => Self::poisson(c),
            _ => Err(unknown()),
        }
    }

    pub fn n_features(&self) -> usize {
        match self.model.classes() {
            Some(k) => self.beta_true.len() / (k - 1),
            None => self.beta_true.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n == 0 || n > self.full_size) {
            return bad(format!("every n must lie in [1, N = {}]", self.full_size));
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        let d = self.n_features();
        if d == 0 || self.model.coef_dim(d) != self.beta_true.len() {
            return bad(format!("beta_true has length {} which does not fit {}", self.beta_true.len(), self.model.family));
        }
        if !self.beta_true.is_finite() {
            return bad("beta_true must be finite".into());
        }
        if self.pilot_size < d + 1 || self.pilot_size > self.full_size {
            return bad(format!("pilot size must lie in [{}, {}]", d + 1, self.full_size));
        }
        if !(0.0..1.0).contains(&self.ci_level) {
            return bad("ci_level must lie in [0, 1)".into());
        }
        self.covariate_law.validate()?;
        self.sampling.check_family(&self.model)?;
        Ok(())
    }
}

/// `(bias^2, variance, mse)` of a set of estimates about a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

/// `bias^2 = ||mean - ref||^2`, `variance = mean ||b - mean||^2`,
/// `mse = bias^2 + variance`.
pub fn decompose_bias_variance(estimates: &[Vec<f64>], reference: &[f64]) -> Result<Decomposition> {
    let Some(first) = estimates.first() else {
        return Err(Error::InvalidArgument("no estimates to decompose".into()));
    };
    let d = reference.len();
    if estimates.iter().any(|e| e.len() != d) || first.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: first.len() });
    }
    let r = estimates.len() as f64;
    let mut mean = vec![0.0; d];
    for e in estimates {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r);
    let bias2: f64 = mean.iter().zip(reference).map(|(m, t)| (m - t).powi(2)).sum();
    let variance: f64 = estimates
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / r;
    Ok(Decomposition { bias2, variance, mse: bias2 + variance })
}

/// Summary of one `(method, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    /// Successful replications entering the moments.
    pub replications: usize,
    pub failures: usize,
    /// `None` when every replication failed.
    pub stats: Option<Decomposition>,
    pub mean_realized_size: f64,
}

impl CellSummary {
    pub fn mse(&self) -> Option<f64> {
        self.stats.map(|s| s.mse)
    }
}

/// Variance-estimate diagnostics at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub n: usize,
    /// Replications where both the MSCLE and weighted estimates exist.
    pub paired: usize,
    /// Paired replications with `trace(MSCLE cov) <= trace(weighted cov)`.
    pub mscle_trace_le_weighted: usize,
    pub mean_trace_mscle: f64,
    pub mean_trace_weighted: f64,
    /// Replications with an MSCLE interval.
    pub coverage_replications: usize,
    /// Per-coefficient coverage of the MSCLE intervals.
    pub coverage: Vec<f64>,
    /// Per-coefficient mean MSCLE interval half-width.
    pub mean_half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub master_seed: u64,
    pub replications: usize,
    pub pilot_failures: usize,
    pub cells: Vec<CellSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variance: Vec<VarianceSummary>,
}

impl StudyResult {
    pub fn cell(&self, method: Method, n: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn mse(&self, method: Method, n: usize) -> Option<f64> {
        self.cell(method, n).and_then(CellSummary::mse)
    }

    /// `method,n,bias2,var,mse,failures,replications`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(format!("write failed: {e}"));
        w.write_record(["method", "n", "bias2", "var", "mse", "failures", "replications"]).map_err(err)?;
        for c in &self.cells {
            let (b, v, m) = match c.stats {
                Some(s) => (s.bias2.to_string(), s.variance.to_string(), s.mse.to_string()),
                None => ("NA".into(), "NA".into(), "NA".into()),
            };
            w.write_record([c.method.name().to_string(), c.n.to_string(), b, v, m, c.failures.to_string(), c.replications.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))
    }

    /// Long format `scenario,method,n,metric,value` with metrics
    /// `mse`, `log_mse`, `bias2`, `var`.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(format!("write failed: {e}"));
        w.write_record(["scenario", "method", "n", "metric", "value"]).map_err(err)?;
        for c in &self.cells {
            let Some(s) = c.stats else { continue };
            for (metric, value) in [("mse", s.mse), ("log_mse", s.mse.ln()), ("bias2", s.bias2), ("var", s.variance)] {
                w.write_record([self.scenario.clone(), c.method.name().into(), c.n.to_string(), metric.into(), value.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))
    }
}

/// Everything a replication needs besides the data.
struct Design<'a> {
    model: &'a GlmModel,
    n_grid: &'a [usize],
    pilot_size: usize,
    methods: &'a [Method],
    sampling: SamplingMethod,
    misspecified_pilot: bool,
    pilot_overlap: bool,
    variance: bool,
    ci_level: f64,
    reference: &'a [f64],
}

#[derive(Debug, Clone, Default)]
struct NOutcome {
    /// Indexed like `Design::methods`.
    estimates: Vec<Option<Vec<f64>>>,
    realized: Vec<usize>,
    traces: Option<(f64, f64)>,
    /// `(covered, half_width)` per coefficient.
    intervals: Option<Vec<(bool, f64)>>,
}

#[derive(Debug, Clone)]
struct Outcome {
    pilot_failed: bool,
    per_n: Vec<NOutcome>,
}

fn converged(fit: Result<crate::FitResult>) -> Option<crate::FitResult> {
    fit.ok().filter(|f| f.converged && f.coefficients.is_finite())
}

fn replicate(design: &Design, data: &Dataset, streams: &RngStreams, r: u64) -> Outcome {
    let fail = Outcome { pilot_failed: true, per_n: Vec::new() };
    let model = design.model;
    let pilot = pilot_fit(model, data, design.pilot_size, design.sampling, &mut streams.stream(r, Purpose::Pilot));
    let Ok(mut pilot) = pilot else { return fail };
    if design.misspecified_pilot {
        match misspecify_pilot(model, data, &pilot, &mut streams.stream(r, Purpose::Misspecify)) {
            Ok(p) => pilot = p,
            Err(_) => return fail,
        }
    }
    let Ok(mut base) = plan_probabilities(model, data, &pilot, design.n_grid[0] as f64) else { return fail };
    if !design.pilot_overlap {
        base = base.exclude(&pilot.rows);
    }
    let opts = FitOptions::default();
    let per_n = design
        .n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| replicate_n(design, data, streams, r, j as u16, n, &base, &pilot, &opts))
        .collect();
    Outcome { pilot_failed: false, per_n }
}

#[allow(clippy::too_many_arguments)]
fn replicate_n(
    design: &Design,
    data: &Dataset,
    streams: &RngStreams,
    r: u64,
    j: u16,
    n: usize,
    base: &crate::subsampling::SubsamplePlan,
    pilot: &PilotEstimate,
    opts: &FitOptions,
) -> NOutcome {
    let model = design.model;
    let init = pilot.beta.as_slice();
    let mut out = NOutcome::default();
    let Ok(plan) = base.rescaled(n as f64) else {
        out.estimates = vec![None; design.methods.len()];
        out.realized = vec![0; design.methods.len()];
        return out;
    };
    let draw = draw_subsample(&plan, &mut streams.stream(r, Purpose::Subsample(j)));
    let mut mscle = None;
    let mut weighted = None;
    for &method in design.methods {
        let (fit, size) = match method {
            Method::Uniform => {
                let uniform = uniform_probabilities(data, n as f64).map(|p| {
                    if design.pilot_overlap {
                        p
                    } else {
                        p.exclude(&pilot.rows)
                    }
                });
                match uniform {
                    Ok(u) => {
                        let ud = draw_subsample(&u, &mut streams.stream(r, Purpose::Uniform(j)));
                        (converged(naive_fit(model, data, &ud, init, opts)), ud.realized_size)
                    }
                    Err(_) => (None, 0),
                }
            }
            m => (converged(fit_method(m, model, data, &plan, &draw, pilot, init, opts)), draw.realized_size),
        };
        if method == Method::Mscle {
            mscle = fit.as_ref().map(|f| f.coefficients.clone());
        }
        if method == Method::Weighted {
            weighted = fit.as_ref().map(|f| f.coefficients.clone());
        }
        out.estimates.push(fit.map(|f| f.coefficients.into_inner()));
        out.realized.push(size);
    }
    if design.variance {
        let sigma = mscle.as_ref().and_then(|b| estimate_sigma_mscle(model, data, &plan, &draw, pilot, b).ok());
        if let (Some(s), Some(b)) = (&sigma, &weighted) {
            if let Ok(v) = estimate_v_weighted(model, data, &plan, &draw, b) {
                out.traces = Some((s.trace(), v.trace()));
            }
        }
        if let (Some(s), Some(b)) = (&sigma, &mscle) {
            let fit = crate::FitResult {
                coefficients: b.clone(),
                covariance: None,
                iterations: 0,
                converged: true,
                final_gradient_norm: 0.0,
                objective: 0.0,
            };
            if let Ok(ci) = confidence_intervals(&fit, s, design.ci_level) {
                out.intervals = Some(
                    ci.iter().zip(design.reference).map(|(c, t)| (c.contains(*t), c.half_width())).collect(),
                );
            }
        }
    }
    out
}

fn summarize(design: &Design, scenario: &str, seed: u64, outcomes: &[Outcome]) -> Result<StudyResult> {
    let pilot_failures = outcomes.iter().filter(|o| o.pilot_failed).count();
    let ok: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pilot_failed).collect();
    let mut cells = Vec::new();
    let mut variance = Vec::new();
    for (j, &n) in design.n_grid.iter().enumerate() {
        for (m, &method) in design.methods.iter().enumerate() {
            let ests: Vec<Vec<f64>> = ok.iter().filter_map(|o| o.per_n[j].estimates[m].clone()).collect();
            let sizes: Vec<usize> = ok
                .iter()
                .filter(|o| o.per_n[j].estimates[m].is_some())
                .map(|o| o.per_n[j].realized[m])
                .collect();
            let stats = if ests.is_empty() { None } else { Some(decompose_bias_variance(&ests, design.reference)?) };
            cells.push(CellSummary {
                method,
                n,
                replications: ests.len(),
                failures: outcomes.len() - ests.len(),
                stats,
                mean_realized_size: if sizes.is_empty() {
                    0.0
                } else {
                    sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
                },
            });
        }
        if design.variance {
            let traces: Vec<(f64, f64)> = ok.iter().filter_map(|o| o.per_n[j].traces).collect();
            let ivs: Vec<&Vec<(bool, f64)>> = ok.iter().filter_map(|o| o.per_n[j].intervals.as_ref()).collect();
            let dim = design.reference.len();
            let mut coverage = vec![0.0; dim];
            let mut half = vec![0.0; dim];
            for iv in &ivs {
                for (k, (c, h)) in iv.iter().enumerate() {
                    coverage[k] += *c as u8 as f64;
                    half[k] += h;
                }
            }
            let nc = ivs.len().max(1) as f64;
            let np = traces.len().max(1) as f64;
            variance.push(VarianceSummary {
                n,
                paired: traces.len(),
                mscle_trace_le_weighted: traces.iter().filter(|(a, b)| a <= b).count(),
                mean_trace_mscle: traces.iter().map(|t| t.0).sum::<f64>() / np,
                mean_trace_weighted: traces.iter().map(|t| t.1).sum::<f64>() / np,
                coverage_replications: ivs.len(),
                coverage: coverage.iter().map(|c| c / nc).collect(),
                mean_half_width: half.iter().map(|h| h / nc).collect(),
            });
        }
    }
    Ok(StudyResult { scenario: scenario.to_string(), master_seed: seed, replications: outcomes.len(), pilot_failures, cells, variance })
}

/// Worker count from `MSCLE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("MSCLE_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

fn run_parallel<F>(replications: usize, threads: Option<usize>, f: F) -> Result<Vec<Outcome>>
where
    F: Fn(u64) -> Result<Outcome> + Sync + Send,
{
    let job = || (0..replications as u64).into_par_iter().map(&f).collect::<Result<Vec<_>>>();
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Runs a simulation study: fresh data per replication, shared across `n`.
pub fn run_study(spec: &ScenarioSpec, master_seed: u64) -> Result<StudyResult> {
    run_study_with_threads(spec, master_seed, thread_cap())
}

pub fn run_study_with_threads(spec: &ScenarioSpec, master_seed: u64, threads: Option<usize>) -> Result<StudyResult> {
    spec.validate()?;
    let streams = RngStreams::new(master_seed);
    let design = Design {
        model: &spec.model,
        n_grid: &spec.n_grid,
        pilot_size: spec.pilot_size,
        methods: &spec.methods,
        sampling: spec.sampling,
        misspecified_pilot: spec.misspecified_pilot,
        pilot_overlap: spec.pilot_overlap,
        variance: spec.variance,
        ci_level: spec.ci_level,
        reference: &spec.beta_true,
    };
    let d = spec.n_features();
    let outcomes = run_parallel(spec.replications, threads, |r| {
        let data = generate_dataset(
            &spec.model,
            &spec.covariate_law,
            &spec.beta_true,
            spec.full_size,
            d,
            &mut streams.stream(r, Purpose::Covariates),
            &mut streams.stream(r, Purpose::Responses),
        )?;
        Ok(replicate(&design, &data, &streams, r))
    })?;
    summarize(&design, &spec.name, master_seed, &outcomes)
}

/// Repeated subsampling of one fixed dataset, scored against a reference
/// (typically the full-data estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingSpec {
    pub name: String,
    pub model: GlmModel,
    pub n_grid: Vec<usize>,
    pub pilot_size: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub sampling: SamplingMethod,
    #[serde(default)]
    pub misspecified_pilot: bool,
    #[serde(default)]
    pub pilot_overlap: bool,
}

pub fn run_resampling_study(spec: &ResamplingSpec, data: &Dataset, reference: &Coefficients, master_seed: u64) -> Result<StudyResult> {
    if spec.replications == 0 || spec.n_grid.is_empty() || spec.methods.is_empty() {
        return Err(Error::InvalidArgument("need replications, sizes and methods".into()));
    }
    if spec.n_grid.iter().any(|&n| n == 0 || n > data.n_rows()) {
        return Err(Error::InvalidArgument(format!("every n must lie in [1, {}]", data.n_rows())));
    }
    let dim = spec.model.coef_dim(data.n_features());
    if reference.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: reference.len() });
    }
    let streams = RngStreams::new(master_seed);
    let design = Design {
        model: &spec.model,
        n_grid: &spec.n_grid,
        pilot_size: spec.pilot_size,
        methods: &spec.methods,
        sampling: spec.sampling,
        misspecified_pilot: spec.misspecified_pilot,
        pilot_overlap: spec.pilot_overlap,
        variance: false,
        ci_level: default_level(),
        reference,
    };
    let outcomes = run_parallel(spec.replications, thread_cap(), |r| Ok(replicate(&design, data, &streams, r)))?;
    summarize(&design, &spec.name, master_seed, &outcomes)
}
