//! Command-line front end of the qcdp laboratory.
//!
//! Every command reads an optional JSON config, writes its data files and a
//! `manifest.json` into the output directory, and on failure prints a JSON
//! error object to stderr with exit code 2 (config), 3 (precondition) or 4
//! (budget refusal).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "qcdp", version, about = "Quasi-critical directed polymer laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve for β_N and report σ² and 1 − σ²R_N.
    Calibrate,
    /// Exact block variances and geometric bounds over the (N, M) grid.
    ExactVariance,
    /// Continuum variance v_φ, its time blocks and the Riemann-sum check.
    LimitVariance,
    /// Monte Carlo samples of X_N and its blocks.
    Simulate,
    /// Simulate X_N and compare with the normal law of exact variance.
    CltTest,
    /// Decomposition defect of X_N into time blocks.
    BlockCheck,
    /// Exact moment expansion against the brute-force path oracle.
    MomentCheck,
    /// Moment bounds against exact moments, and the fourth-moment pipeline.
    BoundCheck,
    /// Random-walk inequalities, ball covering and the maximal inequality.
    RwboundCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Calibrate => "calibrate",
            Self::ExactVariance => "exact-variance",
            Self::LimitVariance => "limit-variance",
            Self::Simulate => "simulate",
            Self::CltTest => "clt-test",
            Self::BlockCheck => "block-check",
            Self::MomentCheck => "moment-check",
            Self::BoundCheck => "bound-check",
            Self::RwboundCheck => "rwbound-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Budget(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Precondition(_) | Self::Io(_) => 3,
            Self::Budget(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Precondition(_) => "precondition",
            Self::Budget(_) => "budget",
            Self::Io(_) => "io",
        }
    }

    pub fn precondition(e: impl std::fmt::Display) -> Self {
        Self::Precondition(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

fn fail(e: &CliError) -> ExitCode {
    let report = ErrorReport {
        error: e.kind(),
        message: e.to_string(),
        exit_code: e.code(),
    };
    eprintln!("{}", serde_json::to_string(&report).expect("serialisable"));
    ExitCode::from(e.code())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    commands::run(cli.command, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => return fail(&CliError::Config(e.to_string())),
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
