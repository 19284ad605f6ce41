//! `wickpt`: spectra, thresholds, laser dynamics and figure data for
//! Wick-rotated PT-symmetric resonators.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use serde_json::{json, Value};

use crate::commands::Headline;
use crate::config::{Params, Preset};
use crate::error::{config_err, AppError};
use crate::output::Output;

#[derive(Debug, Parser)]
#[command(
    name = "wickpt",
    version,
    about = "Wick-rotated PT-symmetric laser models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Flat TOML file with parameter keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Upper bound on concurrent runs.
    #[arg(long, env = "WICKPT_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sweep {
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig2a,
    Fig2cde,
    Fig3b,
    Fig3c,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lowest eigenvalues over a range of tilts.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Bisection for the tilt where the spectrum turns complex.
    Threshold {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Switch-on simulation of the nonlinear field equation.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Two-mode coupled-amplitude model.
    Dimer {
        /// Sweep the detuning over `ratio_min..ratio_max` times kappa.
        #[arg(long, value_enum)]
        sweep: Option<Sweep>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Saturation coefficients and limit cycles above the transition.
    Weaknl {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Physical length, time and tilt scales of a cavity.
    Units {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Data behind one figure.
    Figure {
        #[arg(value_enum)]
        name: Figure,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: Params,
    },
}

impl Command {
    fn parts(&self) -> (String, &RunArgs, &Params) {
        match self {
            Command::Spectrum { run, params } => ("spectrum".into(), run, params),
            Command::Threshold { run, params } => ("threshold".into(), run, params),
            Command::Evolve { run, params } => ("evolve".into(), run, params),
            Command::Dimer { sweep, run, params } => {
                let name = if sweep.is_some() {
                    "dimer --sweep sigma"
                } else {
                    "dimer"
                };
                (name.into(), run, params)
            }
            Command::Weaknl { run, params } => ("weaknl".into(), run, params),
            Command::Units { run, params } => ("units".into(), run, params),
            Command::Figure { name, run, params } => {
                let n = name.to_possible_value().expect("named figure");
                (format!("figure {}", n.get_name()), run, params)
            }
        }
    }

    /// Figures run with their standard parameters unless told otherwise.
    fn default_preset(&self) -> Option<Preset> {
        match self {
            Command::Figure {
                name: Figure::Fig2a | Figure::Fig2cde,
                ..
            } => Some(Preset::Fig2),
            Command::Figure {
                name: Figure::Fig3b | Figure::Fig3c,
                ..
            } => Some(Preset::Fig3),
            _ => None,
        }
    }

    fn execute(&self, p: &Params, out: &Output) -> Result<Headline, AppError> {
        match self {
            Command::Spectrum { .. } => commands::spectrum(p, out),
            Command::Threshold { .. } => commands::threshold(p, out),
            Command::Evolve { .. } => commands::evolve_cmd(p, out),
            Command::Dimer { sweep, .. } => commands::dimer(p, sweep.is_some(), out),
            Command::Weaknl { .. } => commands::weaknl(p, out),
            Command::Units { .. } => commands::units(p, out),
            Command::Figure { name, .. } => match name {
                Figure::Fig2a => commands::fig2a(p, out),
                Figure::Fig2cde => commands::fig2cde(p, out),
                Figure::Fig3b => commands::fig3b(p, out),
                Figure::Fig3c => commands::fig3c(p, out),
            },
        }
    }
}

fn resolve(
    run: &RunArgs,
    flags: &Params,
    default_preset: Option<Preset>,
) -> Result<Params, AppError> {
    let file = match &run.config {
        Some(path) => Params::from_file(path)?,
        None => Params::default(),
    };
    let mut p = file.overlay(flags.clone());
    p.preset = p.preset.or(default_preset);
    let p = p.with_preset();
    p.check()?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), AppError> {
    let started = Instant::now();
    let (name, args, flags) = cli.command.parts();
    let params = resolve(args, flags, cli.command.default_preset())?;
    let jobs = match args.jobs {
        Some(0) => return Err(config_err("jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("cannot start {jobs} workers: {e}")))?;

    let out = Output::create(&args.out)?;
    let headline = match pool.install(|| cli.command.execute(&params, &out)) {
        Ok(h) => h,
        Err(e) => {
            out.discard();
            return Err(e);
        }
    };
    let mut echo = serde_json::to_value(&params)?;
    if let Value::Object(m) = &mut echo {
        m.retain(|_, v| !v.is_null());
    }
    let config = json!({ "params": echo, "jobs": jobs });
    let manifest = out.finish(&name, config, started.elapsed().as_secs_f64(), headline)?;
    println!("{}", serde_json::to_string_pretty(&manifest.headline)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
