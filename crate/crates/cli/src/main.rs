use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wonham_lab::{run_file, Experiment};

#[derive(Parser)]
#[command(name = "wonham", version, about = "Wonham filter stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (flat key=value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One replication with full trajectory dumps.
    Simulate,
    /// Monte Carlo stability index from two mismatched filters.
    GammaMc,
    /// Two-state closed forms by quadrature.
    GammaQuad,
    /// All Lyapunov-exponent estimators side by side.
    Lyapunov,
    /// Closed-form bounds only.
    Bounds,
    /// Survival table of the coupling time.
    Couple,
    /// Ergodic-average identity along the true signal.
    ErgodicAvg,
    /// Stability index over the configured noise levels.
    SnrSweep,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Experiment::Simulate,
            Command::GammaMc => Experiment::GammaMc,
            Command::GammaQuad => Experiment::GammaQuad,
            Command::Lyapunov => Experiment::Lyapunov,
            Command::Bounds => Experiment::Bounds,
            Command::Couple => Experiment::Couple,
            Command::ErgodicAvg => Experiment::ErgodicAvg,
            Command::SnrSweep => Experiment::SnrSweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(1);
    };
    match run_file(cli.command.into(), &config, &cli.out, cli.threads, cli.seed) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            ExitCode::from(e.exit_code())
        }
    }
}
