//! Command flags, optionally loaded from a JSON file whose keys mirror them.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    /// Long-format CSV (`simulate` only).
    Long,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// JSON file with any of these options; command-line flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Do not prepend a column of ones.
    #[arg(long)]
    pub no_intercept: bool,

    /// Scenario preset (`multiclass_a`..`multiclass_d`, `poisson_a`..`poisson_d`):
    /// the design for `simulate`, a synthetic data source otherwise.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Full study design as a JSON file (`simulate`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Rows of synthetic data generated from `--scenario` (fit/subsample/compare).
    #[arg(long)]
    pub rows: Option<usize>,

    /// logistic, binary:<logit|probit|cloglog>, multiclass:<K> or poisson.
    #[arg(long)]
    pub family: Option<String>,
    /// Estimators: mscle, weighted, naive, uniform (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// gradnorm, lcc, lopt, aopt or uniform.
    #[arg(long)]
    pub sampling: Option<String>,
    /// Target subsample size(s); `simulate` accepts a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub pilot_size: Option<usize>,
    /// Shift every pilot coefficient by an independent U(1, 2) draw.
    #[arg(long)]
    pub pilot_misspecify: bool,
    /// Keep pilot rows eligible for the main subsample.
    #[arg(long)]
    pub pilot_overlap: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level of the reported intervals.
    #[arg(long)]
    pub level: Option<f64>,

    /// Replications (`simulate`).
    #[arg(long)]
    pub replications: Option<usize>,
    /// Full-data size N (`simulate`).
    #[arg(long)]
    pub full_size: Option<usize>,
    /// Also estimate variances and interval coverage (`simulate`).
    #[arg(long)]
    pub variance: bool,
    /// Print the resolved study design and exit (`simulate`).
    #[arg(long)]
    #[serde(skip)]
    pub print_spec: bool,

    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    fn merged_over(self, file: Flags) -> Flags {
        fn vec_or<T>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
            if a.is_empty() {
                b
            } else {
                a
            }
        }
        Flags {
            config: self.config,
            input: self.input.or(file.input),
            response: self.response.or(file.response),
            no_intercept: self.no_intercept || file.no_intercept,
            scenario: self.scenario.or(file.scenario),
            spec: self.spec.or(file.spec),
            rows: self.rows.or(file.rows),
            family: self.family.or(file.family),
            method: vec_or(self.method, file.method),
            sampling: self.sampling.or(file.sampling),
            n: vec_or(self.n, file.n),
            pilot_size: self.pilot_size.or(file.pilot_size),
            pilot_misspecify: self.pilot_misspecify || file.pilot_misspecify,
            pilot_overlap: self.pilot_overlap || file.pilot_overlap,
            seed: self.seed.or(file.seed),
            level: self.level.or(file.level),
            replications: self.replications.or(file.replications),
            full_size: self.full_size.or(file.full_size),
            variance: self.variance || file.variance,
            print_spec: self.print_spec,
            out: self.out.or(file.out),
            format: self.format.or(file.format),
        }
    }
}

/// Resolved options for one command.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    #[serde(flatten)]
    pub flags: Flags,
}

pub fn resolve(flags: Flags, command: &str) -> Result<Resolved, CliError> {
    let mut flags = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
            let mut file: Flags = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            // relative paths in a config file are relative to the file
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            for p in [&mut file.input, &mut file.spec, &mut file.out].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            flags.merged_over(file)
        }
        None => flags,
    };
    flags.config = None;
    if let Some(p) = &flags.input {
        if !p.exists() {
            return Err(CliError::Io { path: p.display().to_string(), message: "input file does not exist".into() });
        }
    }
    if let Some(p) = &flags.spec {
        if !p.exists() {
            return Err(CliError::Io { path: p.display().to_string(), message: "spec file does not exist".into() });
        }
    }
    if command == "simulate" && flags.seed.is_none() && !flags.print_spec {
        return Err(CliError::Usage("simulate requires --seed".into()));
    }
    if command != "simulate" && flags.input.is_none() && flags.scenario.is_none() {
        return Err(CliError::Usage(format!("{command} needs --input <csv> or --scenario <preset>")));
    }
    if flags.input.is_some() && flags.scenario.is_some() && command != "simulate" {
        return Err(CliError::Usage("--input and --scenario are mutually exclusive".into()));
    }
    if flags.format == Some(Format::Long) && command != "simulate" {
        return Err(CliError::Usage("--format long is only available for simulate".into()));
    }
    Ok(Resolved { command: command.to_string(), flags })
}
