//! Command-line front end of `kelly-core`.
//!
//! Every subcommand reads an optional JSON config file, overlays the flags
//! given on the command line, and writes CSV data or a versioned JSON
//! report. Outputs depend only on the resolved configuration, so equal
//! inputs give identical bytes.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::Output;
use config::{closed_form_model, ct_model, hf_driver, source_model, RawConfig};

#[derive(Debug, Parser)]
#[command(name = "kelly", version, about = "Growth, risk and limit-theorem checks for fixed-fraction betting")]
pub struct Cli {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Growth, variance, Sharpe ratio and ridge coefficient over a grid of fractions (CSV).
    Analyze(AnalyzeArgs),
    /// Optimal fraction under a criterion (JSON).
    Optimize(OptimizeArgs),
    /// One continuous-time wealth path (CSV).
    Simulate(SimulateArgs),
    /// First-passage law of a wealth target, optionally checked by simulation (JSON).
    FirstPassage(FirstPassageArgs),
    /// Kelly fraction and growth of high-frequency schemes across bet frequencies (CSV).
    HfConverge(HfConvergeArgs),
    /// Closed-form growth and variance polynomials of a continuous-time model (JSON).
    CtAsymptotics(CtAsymptoticsArgs),
    /// Run a statistical check and exit nonzero if it fails (JSON).
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Optimize(_) => "optimize",
            Command::Simulate(_) => "simulate",
            Command::FirstPassage(_) => "first-passage",
            Command::HfConverge(_) => "hf-converge",
            Command::CtAsymptotics(_) => "ct-asymptotics",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// `bernoulli:P`, `squared-cauchy`, `squared-t3`, or JSON.
    #[arg(long)]
    pub model: Option<String>,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long)]
    pub grid: Option<String>,
    /// Ridge penalty.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// kelly, ridge, sharpe or variance-capped.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Variance cap.
    #[arg(long)]
    pub v0: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// `gbm`, `vasicek`, `cir`, `heston`, `logistic-rate`, `logistic-price`
    /// with optional `:key=value,...` overrides, or JSON.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Keep every k-th grid point.
    #[arg(long)]
    pub every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FirstPassageArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub f: Option<f64>,
    /// Wealth target (> 1).
    #[arg(long)]
    pub w: Option<f64>,
    /// Number of simulated passages.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct HfConvergeArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// arithmetic or geometric.
    #[arg(long)]
    pub kind: Option<String>,
    /// `gaussian`, `exponential`, `bernoulli:P`, `ar1:A`, or JSON.
    #[arg(long)]
    pub driver: Option<String>,
    /// Bets per unit time, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CtAsymptoticsArgs {
    #[arg(long)]
    pub model: Option<String>,
    /// Ridge penalty; adds the ridge fraction to the report.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Evaluate growth, variance and Sharpe ratio at this fraction.
    #[arg(long)]
    pub f: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// lln, clt, renewal or gamma-limit.
    #[arg(long)]
    pub suite: Option<String>,
    /// Any closed-form or continuous-time model, or `chain:P,Q`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Renewal targets, comma-separated wealth levels.
    #[arg(long, value_delimiter = ',')]
    pub w_grid: Option<Vec<f64>>,
    /// Renewal targets, comma-separated `ln w`.
    #[arg(long, value_delimiter = ',')]
    pub log_w: Option<Vec<f64>>,
    #[arg(long)]
    pub variance_override: Option<f64>,
}

/// Resolves the configuration of `cli` and runs it. Returns the output and
/// the destination (`None` for stdout).
pub fn run(cli: &Cli) -> anyhow::Result<(Output, Option<PathBuf>)> {
    let name = cli.command.name();
    let (raw, envelope) = RawConfig::load(cli.config.as_deref(), name)?;
    let output = cli.output.clone().or(envelope.output);
    let out = match &cli.command {
        Command::Analyze(a) => {
            let cfg = raw.overlay(a)?.expand("model", closed_form_model)?.resolve()?;
            commands::analyze(&cfg)?
        }
        Command::Optimize(a) => {
            let cfg: commands::OptimizeConfig = raw.overlay(a)?.expand("model", closed_form_model)?.resolve()?;
            commands::optimize(&cfg.normalize()?)?
        }
        Command::Simulate(a) => {
            let raw = raw.overlay(a)?.seed_from_env()?;
            raw.require_seed()?;
            commands::simulate(&raw.expand("model", ct_model)?.resolve()?)?
        }
        Command::FirstPassage(a) => {
            let raw = raw.overlay(a)?.seed_from_env()?;
            commands::first_passage(&raw.expand("model", ct_model)?.resolve()?)?
        }
        Command::HfConverge(a) => {
            let raw = raw.overlay(a)?.seed_from_env()?;
            raw.require_seed()?;
            commands::hf_converge(&raw.expand("driver", hf_driver)?.resolve()?)?
        }
        Command::CtAsymptotics(a) => {
            let cfg = raw.overlay(a)?.expand("model", ct_model)?.resolve()?;
            commands::ct_asymptotics_cmd(&cfg)?
        }
        Command::Verify(a) => {
            let raw = raw.overlay(a)?.seed_from_env()?;
            raw.require_seed()?;
            let cfg: commands::VerifyConfig = raw.expand("model", source_model)?.resolve()?;
            commands::verify(&cfg.normalize()?)?
        }
    };
    Ok((out, output))
}
