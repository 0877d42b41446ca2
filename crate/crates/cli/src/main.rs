use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use spectral_fatigue::sim::runner::GRAIN_MAP_FILE;
use spectral_fatigue::sim::{generate, postprocess, run_experiment, ExperimentConfig};

/// FFT-based crystal plasticity phase-field fatigue simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Replaces the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the configured output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Replaces the configured cycle cap.
    #[arg(long)]
    max_cycles: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs an experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Writes the crack growth table of a finished run.
    Postprocess { outdir: PathBuf },
    /// Writes the configured grain map without solving.
    Generate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &overrides.output {
        cfg.output.directory = dir.clone();
    }
    if let Some(n) = overrides.max_cycles {
        cfg.load.max_cycles = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{:?} after {} increments; output in {}",
                summary.stop,
                summary.increments,
                summary.output_dir.display()
            );
        }
        Command::Postprocess { outdir } => {
            let rows = postprocess(&outdir).with_context(|| format!("post-processing {}", outdir.display()))?;
            println!("{} growth rows written to {}", rows.len(), outdir.display());
        }
        Command::Generate { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let path = cfg.output.directory.join(GRAIN_MAP_FILE);
            let map = generate(&cfg, &path)?;
            info!("{} grains", map.n_grains());
            println!("grain map written to {}", path.display());
        }
    }
    Ok(())
}
