//! `svjump`: simulate, fit, forecast and compare stochastic-volatility
//! models with jumps on panels of daily returns.

mod commands;
mod config;
mod error;
mod ingest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::bf::Form;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{init_logging, RunDir};

#[derive(Debug, Parser)]
#[command(name = "svjump", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one configuration key, e.g. `--set seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory for the config snapshot, log and outputs.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 uses every core); overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a returns panel and its latent states.
    Simulate(RunArgs),
    /// Run the posterior sampler on the in-sample part of a panel.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from the run directory's checkpoint if there is one.
        #[arg(long)]
        resume: bool,
    },
    /// One-step-ahead predictive densities over the holdout.
    Forecast(RunArgs),
    /// Log predictive Bayes factors between two forecasts.
    Bf {
        #[arg(long)]
        numer: PathBuf,
        #[arg(long)]
        denom: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Joint)]
        form: Form,
        /// Add a column per stock present in both forecasts.
        #[arg(long)]
        per_stock: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Jump matrix, weekday table and ESS of a fit.
    Diagnose(RunArgs),
}

fn prepare(args: &RunArgs) -> CliResult<(RunConfig, RunDir)> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.absolutize()?;
    let dir = RunDir::create(&args.out)?;
    init_logging(&dir)?;
    dir.snapshot(&cfg)?;
    log::info!("run directory {}", dir.path().display());
    Ok((cfg, dir))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, dir) = prepare(&a)?;
            commands::simulate::run(&cfg, &dir)
        }
        Command::Fit { run, resume } => {
            let (cfg, dir) = prepare(&run)?;
            commands::fit::run(&cfg, &dir, resume)
        }
        Command::Forecast(a) => {
            let (cfg, dir) = prepare(&a)?;
            commands::forecast::run(&cfg, &dir)
        }
        Command::Bf { numer, denom, form, per_stock, out } => {
            let dir = RunDir::create(&out)?;
            init_logging(&dir)?;
            commands::bf::run(&numer, &denom, form, per_stock, &dir)
        }
        Command::Diagnose(a) => {
            let (cfg, dir) = prepare(&a)?;
            commands::diagnose::run(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if log::max_level() == log::LevelFilter::Off {
                eprintln!("error: {e}");
            } else {
                log::error!("{e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
