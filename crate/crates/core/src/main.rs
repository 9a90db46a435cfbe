//! Experiment driver CLI.
//!
//! Exit codes: 0 success, 2 config error, 3 solver abort, 4 lifespan hit
//! (informational, `solve` only). The output directory defaults to the
//! working directory and can be overridden with `ELASTOREG_OUTDIR`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use elastoreg::config::{ExperimentKind, RunConfig};
use elastoreg::experiments::{run_experiment, with_kind, AppError, ExitKind};

#[derive(Parser)]
#[command(name = "elastoreg", version, about = "Nonlinear elastodynamics with p-Laplace viscous regularization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single run: writes run.csv and summary.txt.
    Solve { config: PathBuf },
    /// Viscosity continuation over experiment.kappas: writes kappa.csv.
    SweepKappa { config: PathBuf },
    /// Lifespan vs data scale over experiment.epsilons: writes lifespan.csv.
    SweepLifespan { config: PathBuf },
    /// Constitutive assumption sampling: writes validate.txt.
    ValidateMaterial { config: PathBuf },
    /// Manufactured-solution convergence study: writes convergence.csv.
    Convergence { config: PathBuf },
}

fn out_dir() -> PathBuf {
    std::env::var_os("ELASTOREG_OUTDIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (path, kind) = match &cli.cmd {
        Cmd::Solve { config } => (config, ExperimentKind::Solve),
        Cmd::SweepKappa { config } => (config, ExperimentKind::KappaSweep),
        Cmd::SweepLifespan { config } => (config, ExperimentKind::LifespanSweep),
        Cmd::ValidateMaterial { config } => (config, ExperimentKind::Validate),
        Cmd::Convergence { config } => (config, ExperimentKind::Convergence),
    };
    let cfg = match RunConfig::load(path) {
        Ok(cfg) => with_kind(cfg, kind),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run_experiment(&cfg, &out_dir()) {
        Ok(ExitKind::Success) => ExitCode::SUCCESS,
        Ok(ExitKind::LifespanHit) => {
            eprintln!("lifespan criterion hit before t_end (see summary.txt)");
            ExitCode::from(4)
        }
        Err(AppError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
