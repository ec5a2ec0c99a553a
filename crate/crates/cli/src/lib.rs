//! Experiment runner behind the `wonham` binary.

pub mod config;
pub mod experiment;

use std::path::Path;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use experiment::{run_experiment, Artifacts, CliError, CliResult};

/// Reads, parses and runs a configuration file, then writes the artifacts
/// to `out`. `seed` overrides the configured seed.
pub fn run_file(
    experiment: Experiment,
    config: &Path,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> CliResult<Artifacts> {
    let text = std::fs::read_to_string(config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| ConfigError::Global(format!("cannot start {threads:?} worker threads: {e}")))?;
    let art = run_experiment(&cfg, experiment, &pool)?;
    art.write_to(out)?;
    Ok(art)
}
