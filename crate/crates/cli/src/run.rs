//! Command implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mscle_core::estimators::{fit_method, naive_fit, Method};
use mscle_core::experiments::{generate_dataset, run_study, ScenarioSpec};
use mscle_core::glm::{Dataset, FitOptions, FitResult, GlmModel};
use mscle_core::io::{ingest_csv, write_json, write_plan_csv, Metadata, Report};
use mscle_core::rng::{Purpose, RngStreams};
use mscle_core::subsampling::{
    draw_subsample, misspecify_pilot, pilot_fit, plan_probabilities, uniform_probabilities, PilotEstimate,
    SamplingMethod, SubsampleDraw, SubsamplePlan,
};
use mscle_core::variance::{confidence_intervals, estimate_sigma_mscle, estimate_v_weighted, Interval, VarianceEstimate};
use serde::Serialize;

use crate::config::{Format, Resolved};
use crate::CliError;

const DEFAULT_N: usize = 1000;
const DEFAULT_PILOT: usize = 400;
const DEFAULT_ROWS: usize = 100_000;
const DEFAULT_LEVEL: f64 = 0.95;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Output sink: the `--out` file or standard output.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// CSV outputs carry their metadata in a `<out>.meta.json` sidecar.
fn write_sidecar(out: Option<&Path>, meta: &Metadata) -> Result<(), CliError> {
    if let Some(p) = out {
        let mut name = p.as_os_str().to_owned();
        name.push(".meta.json");
        let path = Path::new(&name);
        write_json(BufWriter::new(File::create(path).map_err(io_err(path))?), meta)?;
    }
    Ok(())
}

fn metadata(cfg: &Resolved, seed: u64, class_labels: Option<Vec<String>>) -> Metadata {
    let mut meta = Metadata::new(Some(seed), serde_json::to_value(cfg).unwrap_or_default());
    meta.class_labels = class_labels;
    meta
}

struct Problem {
    model: GlmModel,
    data: Dataset,
    feature_names: Vec<String>,
    class_labels: Option<Vec<String>>,
}

fn load_problem(cfg: &Resolved, streams: &RngStreams) -> Result<Problem, CliError> {
    let f = &cfg.flags;
    if let Some(path) = &f.input {
        let family = f.family.as_deref().ok_or_else(|| CliError::Usage("--family is required with --input".into()))?;
        let model = GlmModel::parse(family)?;
        let ing = ingest_csv(path, f.response.as_deref().unwrap_or("y"), &model, !f.no_intercept)?;
        return Ok(Problem { model, data: ing.dataset, feature_names: ing.feature_names, class_labels: ing.class_labels });
    }
    let name = f.scenario.as_deref().expect("validated data source");
    let spec = ScenarioSpec::preset(name)?;
    if let Some(family) = &f.family {
        if GlmModel::parse(family)? != spec.model {
            return Err(CliError::Usage(format!("--family {family} does not match scenario {name}")));
        }
    }
    let d = spec.n_features();
    let data = generate_dataset(
        &spec.model,
        &spec.covariate_law,
        &spec.beta_true,
        f.rows.unwrap_or(DEFAULT_ROWS),
        d,
        &mut streams.stream(0, Purpose::Covariates),
        &mut streams.stream(0, Purpose::Responses),
    )?;
    let mut feature_names = vec!["(intercept)".to_string()];
    feature_names.extend((1..d).map(|j| format!("x{j}")));
    Ok(Problem { model: spec.model, data, feature_names, class_labels: None })
}

fn sampling(cfg: &Resolved, model: &GlmModel) -> Result<SamplingMethod, CliError> {
    Ok(SamplingMethod::parse(cfg.flags.sampling.as_deref().unwrap_or("lopt"), model)?)
}

fn single_n(cfg: &Resolved) -> Result<usize, CliError> {
    match cfg.flags.n.as_slice() {
        [] => Ok(DEFAULT_N),
        [n] => Ok(*n),
        _ => Err(CliError::Usage(format!("{} takes a single --n", cfg.command))),
    }
}

struct Pipeline {
    pilot: PilotEstimate,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
}

fn pipeline(cfg: &Resolved, p: &Problem, streams: &RngStreams) -> Result<Pipeline, CliError> {
    let f = &cfg.flags;
    let method = sampling(cfg, &p.model)?;
    let mut pilot = pilot_fit(
        &p.model,
        &p.data,
        f.pilot_size.unwrap_or(DEFAULT_PILOT),
        method,
        &mut streams.stream(0, Purpose::Pilot),
    )?;
    if f.pilot_misspecify {
        pilot = misspecify_pilot(&p.model, &p.data, &pilot, &mut streams.stream(0, Purpose::Misspecify))?;
    }
    let mut plan = plan_probabilities(&p.model, &p.data, &pilot, single_n(cfg)? as f64)?;
    if !f.pilot_overlap {
        plan = plan.exclude(&pilot.rows);
    }
    let draw = draw_subsample(&plan, &mut streams.stream(0, Purpose::Subsample(0))).with_seed(streams.master_seed());
    Ok(Pipeline { pilot, plan, draw })
}

#[derive(Debug, Serialize)]
struct MethodOutput {
    method: Method,
    realized_size: usize,
    fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance: Option<VarianceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intervals: Option<Vec<Interval>>,
    /// Trace of the estimated coefficient covariance.
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance_trace: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FitOutput {
    family: String,
    sampling: SamplingMethod,
    n_rows: usize,
    target_size: f64,
    expected_size: f64,
    features: Vec<String>,
    pilot: PilotSummary,
    methods: Vec<MethodOutput>,
}

#[derive(Debug, Serialize)]
struct PilotSummary {
    coefficients: Vec<f64>,
    psi: f64,
    pilot_size: usize,
    misspecified: bool,
}

fn run_method(
    method: Method,
    p: &Problem,
    pl: &Pipeline,
    streams: &RngStreams,
    cfg: &Resolved,
    level: f64,
) -> Result<MethodOutput, CliError> {
    let opts = FitOptions::default();
    let init = pl.pilot.beta.as_slice();
    let (mut fit, variance, size) = match method {
        Method::Uniform => {
            let mut plan = uniform_probabilities(&p.data, single_n(cfg)? as f64)?;
            if !cfg.flags.pilot_overlap {
                plan = plan.exclude(&pl.pilot.rows);
            }
            let draw = draw_subsample(&plan, &mut streams.stream(0, Purpose::Uniform(0)));
            let fit = naive_fit(&p.model, &p.data, &draw, init, &opts)?;
            let v = estimate_v_weighted(&p.model, &p.data, &plan, &draw, &fit.coefficients)?;
            (fit, Some(v), draw.realized_size)
        }
        m => {
            let fit = fit_method(m, &p.model, &p.data, &pl.plan, &pl.draw, &pl.pilot, init, &opts)?;
            let v = match m {
                Method::Mscle => Some(estimate_sigma_mscle(&p.model, &p.data, &pl.plan, &pl.draw, &pl.pilot, &fit.coefficients)?),
                Method::Weighted => Some(estimate_v_weighted(&p.model, &p.data, &pl.plan, &pl.draw, &fit.coefficients)?),
                _ => None,
            };
            (fit, v, pl.draw.realized_size)
        }
    };
    let intervals = match &variance {
        Some(v) => {
            fit.covariance = Some(v.covariance());
            Some(confidence_intervals(&fit, v, level)?)
        }
        None => None,
    };
    Ok(MethodOutput {
        method,
        realized_size: size,
        covariance_trace: variance.as_ref().map(VarianceEstimate::trace),
        fit,
        variance,
        intervals,
    })
}

fn methods(cfg: &Resolved, compare: bool) -> Result<Vec<Method>, CliError> {
    if compare {
        return Ok(Method::ALL.to_vec());
    }
    if cfg.flags.method.is_empty() {
        return Ok(vec![Method::Mscle]);
    }
    let mut out = Vec::new();
    for m in &cfg.flags.method {
        let m = Method::parse(m)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// `fit` and `compare`.
pub fn fit(cfg: &Resolved, compare: bool) -> Result<(), CliError> {
    let seed = cfg.flags.seed.unwrap_or(0);
    let level = cfg.flags.level.unwrap_or(DEFAULT_LEVEL);
    mscle_core::variance::normal_quantile(level)?;
    let streams = RngStreams::new(seed);
    let problem = load_problem(cfg, &streams)?;
    let methods = methods(cfg, compare)?;
    let pl = pipeline(cfg, &problem, &streams)?;
    let outputs = methods
        .iter()
        .map(|&m| run_method(m, &problem, &pl, &streams, cfg, level))
        .collect::<Result<Vec<_>, _>>()?;
    let result = FitOutput {
        family: problem.model.family.to_string(),
        sampling: pl.plan.method,
        n_rows: problem.data.n_rows(),
        target_size: pl.plan.target_avg_size,
        expected_size: pl.plan.expected_size(),
        features: problem.feature_names.clone(),
        pilot: PilotSummary {
            coefficients: pl.pilot.beta.to_vec(),
            psi: pl.pilot.psi,
            pilot_size: pl.pilot.pilot_size,
            misspecified: cfg.flags.pilot_misspecify,
        },
        methods: outputs,
    };
    let meta = metadata(cfg, seed, problem.class_labels.clone());
    let out = cfg.flags.out.as_deref();
    match cfg.flags.format.unwrap_or(Format::Json) {
        Format::Json => write_json(sink(out)?, &Report { metadata: meta, result })?,
        _ => {
            write_table(sink(out)?, &result, &problem)?;
            write_sidecar(out, &meta)?;
        }
    }
    Ok(())
}

/// `method,coefficient,estimate,std_error,lower,upper,half_width`, one row per coefficient.
fn write_table<W: Write>(w: W, result: &FitOutput, p: &Problem) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CliError::Io { path: "output".into(), message: e.to_string() };
    w.write_record(["method", "coefficient", "estimate", "std_error", "lower", "upper", "half_width"]).map_err(err)?;
    let d = p.data.n_features();
    let name = |j: usize| match p.model.classes() {
        Some(_) => format!("class{}:{}", j / d, p.feature_names[j % d]),
        None => p.feature_names[j].clone(),
    };
    for m in &result.methods {
        let se = m.variance.as_ref().map(VarianceEstimate::standard_errors);
        for (j, b) in m.fit.coefficients.iter().enumerate() {
            let (s, lo, hi, hw) = match (&se, &m.intervals) {
                (Some(se), Some(ci)) => (
                    se[j].to_string(),
                    ci[j].lower.to_string(),
                    ci[j].upper.to_string(),
                    ci[j].half_width().to_string(),
                ),
                _ => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
            };
            w.write_record([m.method.name().to_string(), name(j), b.to_string(), s, lo, hi, hw]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::Io { path: "output".into(), message: e.to_string() })
}

#[derive(Debug, Serialize)]
struct SubsampleOutput {
    family: String,
    sampling: SamplingMethod,
    target_size: f64,
    expected_size: f64,
    realized_size: usize,
    pilot: PilotSummary,
    probabilities: Vec<f64>,
    indicators: Vec<u8>,
}

pub fn subsample(cfg: &Resolved) -> Result<(), CliError> {
    let seed = cfg.flags.seed.unwrap_or(0);
    let streams = RngStreams::new(seed);
    let problem = load_problem(cfg, &streams)?;
    let pl = pipeline(cfg, &problem, &streams)?;
    let meta = metadata(cfg, seed, problem.class_labels.clone());
    let out = cfg.flags.out.as_deref();
    match cfg.flags.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let result = SubsampleOutput {
                family: problem.model.family.to_string(),
                sampling: pl.plan.method,
                target_size: pl.plan.target_avg_size,
                expected_size: pl.plan.expected_size(),
                realized_size: pl.draw.realized_size,
                pilot: PilotSummary {
                    coefficients: pl.pilot.beta.to_vec(),
                    psi: pl.pilot.psi,
                    pilot_size: pl.pilot.pilot_size,
                    misspecified: cfg.flags.pilot_misspecify,
                },
                probabilities: pl.plan.probabilities.clone(),
                indicators: pl.draw.indicators.iter().map(|&b| b as u8).collect(),
            };
            write_json(sink(out)?, &Report { metadata: meta, result })?;
        }
        _ => {
            write_plan_csv(sink(out)?, &pl.plan, &pl.draw)?;
            write_sidecar(out, &meta)?;
        }
    }
    Ok(())
}

fn study_spec(cfg: &Resolved) -> Result<ScenarioSpec, CliError> {
    let f = &cfg.flags;
    let mut spec = match (&f.spec, &f.scenario) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("spec {}: {e}", path.display())))?
        }
        (None, Some(name)) => ScenarioSpec::preset(name)?,
        (None, None) => return Err(CliError::Usage("simulate needs --scenario <preset> or --spec <file>".into())),
        (Some(_), Some(_)) => return Err(CliError::Usage("--scenario and --spec are mutually exclusive".into())),
    };
    if !f.n.is_empty() {
        spec.n_grid = f.n.clone();
    }
    if let Some(r) = f.replications {
        spec.replications = r;
    }
    if let Some(n) = f.full_size {
        spec.full_size = n;
    }
    if let Some(p) = f.pilot_size {
        spec.pilot_size = p;
    }
    if let Some(l) = f.level {
        spec.ci_level = l;
    }
    if let Some(s) = &f.sampling {
        spec.sampling = SamplingMethod::parse(s, &spec.model)?;
    }
    if !f.method.is_empty() {
        spec.methods = methods(cfg, false)?;
    }
    if let Some(family) = &f.family {
        if GlmModel::parse(family)? != spec.model {
            return Err(CliError::Usage(format!("--family {family} does not match the study design")));
        }
    }
    spec.misspecified_pilot |= f.pilot_misspecify;
    spec.pilot_overlap |= f.pilot_overlap;
    spec.variance |= f.variance;
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(cfg: &Resolved) -> Result<(), CliError> {
    let spec = study_spec(cfg)?;
    let out = cfg.flags.out.as_deref();
    if cfg.flags.print_spec {
        write_json(sink(out)?, &spec)?;
        return Ok(());
    }
    let seed = cfg.flags.seed.expect("validated seed");
    let result = run_study(&spec, seed)?;
    let mut meta = metadata(cfg, seed, None);
    if let serde_json::Value::Object(map) = &mut meta.config {
        map.insert("resolved_spec".into(), serde_json::to_value(&spec).unwrap_or_default());
    }
    match cfg.flags.format.unwrap_or(Format::Json) {
        Format::Json => write_json(sink(out)?, &Report { metadata: meta, result })?,
        Format::Csv => {
            result.write_csv(sink(out)?)?;
            write_sidecar(out, &meta)?;
        }
        Format::Long => {
            result.write_long_csv(sink(out)?)?;
            write_sidecar(out, &meta)?;
        }
    }
    Ok(())
}
