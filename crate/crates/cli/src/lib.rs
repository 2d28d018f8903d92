//! Command-line workflows for the periodic-evaluation solvers: `solve`,
//! `simulate`, `sweep` and `opt-tau`.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{Objective, Report};
pub use config::{ProblemConfig, SweepSpec, Utility};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "periodic-eval", version, about = "Optimal portfolios under periodic performance evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured problem and print the solution report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Also write the effective configuration (TOML) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the objective by Monte Carlo and compare with the analytic value.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
        /// Number of periods, or "auto".
        #[arg(long)]
        periods: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Compare against this value instead of the analytic one.
        #[arg(long, allow_hyphen_values = true)]
        analytic_override: Option<f64>,
    },
    /// Re-solve over a parameter grid and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for the optimal evaluation period.
    OptTau {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Scaled)]
        objective: ObjectiveArg,
        /// Report the supremum over (0, cap] when no sufficient condition applies.
        #[arg(long)]
        tau_cap: Option<f64>,
        /// Write the (tau, objective) curve as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Value,
    Scaled,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Value => Objective::Value,
            ObjectiveArg::Scaled => Objective::Scaled,
        }
    }
}

fn load(path: &std::path::Path) -> Result<ProblemConfig, CliError> {
    let mut cfg = ProblemConfig::load(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config, out: emit } => {
            let cfg = load(&config)?;
            commands::cmd_solve(&cfg, emit.as_deref(), out)
        }
        Command::Simulate { config, paths, periods, seed, analytic_override } => {
            let mut cfg = load(&config)?;
            if let Some(p) = paths {
                cfg.mc.n_paths = p;
            }
            if let Some(p) = periods {
                cfg.mc.n_periods = match p.as_str() {
                    "auto" => config::Periods::Auto,
                    s => match s.parse::<usize>() {
                        Ok(n) if n > 0 => config::Periods::Fixed(n),
                        _ => return Err(CliError::Config(format!("--periods must be \"auto\" or a positive integer, got {s:?}"))),
                    },
                };
            }
            if let Some(s) = seed {
                cfg.mc.seed = s;
            }
            cfg.check()?;
            commands::cmd_simulate(&cfg, analytic_override, out)
        }
        Command::Sweep { config, sweep, out: csv } => {
            let cfg = load(&config)?;
            let spec = SweepSpec::load(&sweep)?;
            commands::cmd_sweep(&cfg, &spec, &csv, out)
        }
        Command::OptTau { config, objective, tau_cap, out: curve } => {
            let cfg = load(&config)?;
            commands::cmd_opt_tau(&cfg, objective.into(), tau_cap, curve.as_deref(), out)
        }
    }
}
