//! Experiment runner for duct-flow molecular communication channels.
//!
//! The `ductsim` binary resolves a layered configuration (built-in
//! defaults, an optional preset, a TOML file and `--set` overrides), runs
//! one experiment and writes its tables as CSV or JSON. Every file starts
//! with the fully resolved configuration and the seed.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod units;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{preset, Layers, Raw, Resolved};
use crate::error::CliError;
use crate::output::{write_tables, Format, RunInfo};

#[derive(Debug, Parser)]
#[command(
    name = "ductsim",
    version,
    about = "Duct-flow molecular communication channel experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify transport regimes (Péclet number against 4 d/a).
    Regime,
    /// Analytic impulse responses, optionally with simulated points.
    Cir,
    /// Particle simulation: observed counts over time.
    Simulate,
    /// Particle positions (x, r²) at the snapshot times.
    Snapshot,
    /// Symbol error rate sweep over distances and symbol intervals.
    Ser,
    /// Run a named preset with its default experiment.
    Preset {
        /// One of snapshot_fig2, cir_small_duct_fig4a, cir_large_duct_fig4b,
        /// regime_map_fig3, ser_sweep_fig5, custom.
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset for the subcommands other than `preset`.
    #[arg(long = "preset", global = true, value_name = "NAME")]
    pub base_preset: Option<String>,
    /// Random seed (overrides the `seed` key).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a configuration key, e.g. `--set channel.radius="200 um"`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Resolves the configuration and names the experiment to run.
pub fn resolve(cli: &Cli) -> Result<(String, Resolved), CliError> {
    let (command, preset_name) = match &cli.command {
        Command::Regime => ("regime", cli.common.base_preset.as_deref()),
        Command::Cir => ("cir", cli.common.base_preset.as_deref()),
        Command::Simulate => ("simulate", cli.common.base_preset.as_deref()),
        Command::Snapshot => ("snapshot", cli.common.base_preset.as_deref()),
        Command::Ser => ("ser", cli.common.base_preset.as_deref()),
        Command::Preset { name } => {
            if cli.common.base_preset.is_some() {
                return Err(CliError::Config(
                    "--preset cannot be combined with the preset subcommand".into(),
                ));
            }
            (preset(name)?.command, Some(name.as_str()))
        }
    };
    let mut layers = Layers {
        preset: preset_name.map(preset).transpose()?,
        ..Layers::default()
    };
    if let Some(path) = &cli.common.config {
        layers = layers.with_file(path)?;
    }
    for assignment in &cli.common.set {
        layers = layers.with_flag(assignment)?;
    }
    if let Some(seed) = cli.common.seed {
        layers.flags.push(("seed".into(), Raw::Number(seed as f64)));
    }
    Ok((command.to_string(), Resolved::resolve(&layers)?))
}

pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (command, config) = resolve(cli)?;
    let format = match cli.common.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let work = || -> Result<Vec<PathBuf>, CliError> {
        info!(
            "{command}: preset {}, seed {}",
            config.preset,
            config.seed()
        );
        let tables = commands::dispatch(&command, &config)?;
        let info = RunInfo {
            command: &command,
            config: &config,
        };
        let written = write_tables(&cli.common.out, &tables, &info, format)?;
        for path in &written {
            info!("wrote {}", path.display());
        }
        Ok(written)
    };
    match cli.common.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(work),
        None => work(),
    }
}
