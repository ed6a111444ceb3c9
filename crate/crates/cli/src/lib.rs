//! Command-line front end: config ingestion, the certification and construction pipelines, and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use report::{Outcome, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("assumption failed: {0}")]
    Assumption(String),
    #[error("violation: {0}")]
    Violation(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn outcome(&self) -> Outcome {
        match self {
            CliError::Input(_) | CliError::Io(_) => Outcome::InputError,
            CliError::Assumption(_) => Outcome::AssumptionFailed,
            CliError::Violation(_) => Outcome::Violation,
            CliError::Inconclusive(_) => Outcome::Inconclusive,
        }
    }

    /// Sorts a library error into the exit-code classes.
    pub fn from_core(context: &str, e: tdsrobust::Error) -> Self {
        use tdsrobust::Error as E;
        let msg = format!("{context}: {e}");
        match e {
            E::UnstableNominal { .. } | E::SingularCharMatrix { .. } => CliError::Assumption(msg),
            E::AreNoStabilizingSolution { .. } | E::BlowUp { .. } => CliError::Violation(msg),
            E::LinearAlgebra(_) | E::IllConditionedQuadrature { .. } => CliError::Inconclusive(msg),
            _ => CliError::Input(msg),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// γ_max, ρ_min or k₁,min, whichever the configured sector calls for.
    Bounds {
        /// Also report the complete-type baseline bound.
        #[arg(long)]
        complete_type: bool,
    },
    /// Frequency-domain existence test for the configured sector.
    Certify,
    /// Builds the functional and writes functional.json.
    Construct,
    /// Checks a stored functional against the config: residuals, positivity, trajectories.
    Verify,
    /// Admissible (‖Δ₀‖, ‖Δ₁‖) regions for the configured (c₁, c₀) scalings.
    Ellipse,
    /// Robustness bound of the complete-type functional.
    CompleteType,
    /// Rightmost characteristic roots.
    Spectrum,
    /// Integrates the perturbed equation and exports trajectories.
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds { .. } => "bounds",
            Command::Certify => "certify",
            Command::Construct => "construct",
            Command::Verify => "verify",
            Command::Ellipse => "ellipse",
            Command::CompleteType => "complete-type",
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tdsrobust",
    version,
    about = "Robustness certificates for linear time-delay systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for report.json, CSV exports and functional files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Runs a parsed command line and returns the report; failures become reports with the matching outcome.
pub fn run(cli: &Cli) -> Report {
    let config_name = cli
        .config
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    let mut report = Report::new(cli.command.name(), &config_name, cli.seed);
    let result = match &cli.config {
        None => Err(CliError::Input("--config is required".into())),
        Some(path) => commands::Context::load(path, cli.out.clone(), cli.seed).and_then(|ctx| {
            if let Some(out) = &ctx.out {
                std::fs::create_dir_all(out)
                    .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            }
            commands::dispatch(&ctx, cli.command, &mut report)
        }),
    };
    if let Err(e) = result {
        report.messages.push(e.to_string());
        report.escalate(e.outcome());
    }
    if let Some(out) = &cli.out {
        let path = out.join("report.json");
        report.files.push(path.display().to_string());
        if let Err(e) = std::fs::write(&path, report.to_json()) {
            report
                .messages
                .push(format!("could not write {}: {e}", path.display()));
        }
    }
    report
}
