//! `mscle`: informative subsampling and subsample estimation from the command line.

mod config;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Debug, Parser)]
#[command(name = "mscle", version, about = "Informative subsampling and sampled conditional likelihood estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pilot, plan, draw and fit the requested estimators on one dataset.
    Fit(Flags),
    /// Write the subsampling probabilities and the drawn indicators.
    Subsample(Flags),
    /// Run a Monte Carlo study.
    Simulate(Flags),
    /// Run every estimator on one shared draw and tabulate them side by side.
    Compare(Flags),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mscle_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let doc = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            report_error("usage", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Fit(f) => config::resolve(f, "fit").and_then(|f| run::fit(&f, false)),
        Command::Subsample(f) => config::resolve(f, "subsample").and_then(|f| run::subsample(&f)),
        Command::Simulate(f) => config::resolve(f, "simulate").and_then(|f| run::simulate(&f)),
        Command::Compare(f) => config::resolve(f, "compare").and_then(|f| run::fit(&f, true)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
