//! Command-line pipeline: generate data, train the decoupler, sanitize a
//! release, evaluate it, sweep trade-off grids and plot the results.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sanitizer_core::MechanismKind;

pub use config::PipelineConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sanitizer", version, about = "Learned-latent data sanitization pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic labeled image dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split a dataset into auxiliary and release parts.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a decoupler on auxiliary data.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sanitize a dataset with a trained decoupler.
    Sanitize {
        #[arg(long)]
        data: PathBuf,
        /// Decoupler checkpoint, or a training output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mechanism: MechanismKind,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure leakage and utility of a release.
    Evaluate {
        /// Release to evaluate (a plain or sanitized dataset directory).
        #[arg(long)]
        data: PathBuf,
        /// Clean auxiliary data used to pretrain the attacker.
        #[arg(long)]
        aux: PathBuf,
        /// Clean held-out data; enables CAS and sensitive-CAS scores.
        #[arg(long)]
        clean_test: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate every point of the configured sweep grid.
    Sweep {
        #[arg(long)]
        aux: PathBuf,
        #[arg(long)]
        release: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pareto front, AuC and SVG plot of a points CSV.
    Plot {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the value recorded next to the points by `sweep`.
        #[arg(long)]
        chance_leakage: Option<f64>,
        #[arg(long)]
        chance_utility: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    use commands::*;
    match cli.command {
        Command::GenData { config, out, seed } => gen_data(config.as_deref(), &out, seed),
        Command::Split { data, config, out, seed } => split(&data, config.as_deref(), &out, seed),
        Command::Train { data, config, out, seed } => train(&data, config.as_deref(), &out, seed),
        Command::Sanitize {
            data,
            model,
            mechanism,
            epsilon,
            config,
            out,
            seed,
        } => sanitize(&SanitizeArgs {
            data: &data,
            model: model.as_deref(),
            mechanism,
            epsilon,
            config: config.as_deref(),
            out: &out,
            seed,
        }),
        Command::Evaluate {
            data,
            aux,
            clean_test,
            config,
            out,
            seed,
        } => evaluate(&data, &aux, clean_test.as_deref(), config.as_deref(), &out, seed),
        Command::Sweep {
            aux,
            release,
            config,
            out,
            jobs,
            seed,
        } => sweep(&aux, &release, config.as_deref(), &out, jobs, seed),
        Command::Plot {
            points,
            out,
            chance_leakage,
            chance_utility,
            config,
        } => plot(&points, &out, chance_leakage, chance_utility, config.as_deref()),
    }
}
