//! `asgd`: bounds, exact risks and simulations for accelerated SGD on
//! overparameterized least squares.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use asgd_core::presets::{FigurePreset, Panel, PresetSpec};
use asgd_core::verify::{Fault, Level, VerifyOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_eigenvalues, Engine, ExperimentConfig, FlagOverrides, VariantSpec};
use crate::error::CliError;
use crate::output::{emit, Document};

#[derive(Parser)]
#[command(name = "asgd", version, about = "Accelerated SGD on overparameterized linear regression")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file; its keys override the preset defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV output; stdout when omitted.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Engines for `figure`, comma-separated.
    #[arg(long, global = true, value_delimiter = ',', value_enum)]
    engines: Option<Vec<Engine>>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantSpec>,
    /// Extra `key=value` config entries in TOML syntax.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Eigenvalues as `a,b,c` or `@file`.
    #[arg(long, global = true, value_name = "LIST")]
    spectrum_custom: Option<String>,
    /// Preset supplying defaults for commands other than `figure`.
    #[arg(long, global = true, default_value = "fig2c")]
    preset: String,
}

#[derive(Subcommand)]
enum Command {
    /// Parameters, cutoff indices, l, r and the decay-rate table.
    Cutoffs {
        /// Number of eigen-indices in the decay table.
        #[arg(long, default_value_t = 20)]
        cap: usize,
    },
    /// Closed-form upper bounds over the s grid.
    Bound,
    /// Exact expected risks from the second-moment recursion.
    Oracle,
    /// Monte Carlo estimates.
    Simulate,
    /// ASGD vs SGD bounds and per-index decay bases.
    Compare {
        #[arg(long, default_value_t = 20)]
        cap: usize,
    },
    /// Reproduce a figure preset, one CSV per panel.
    Figure { preset: String },
    /// Derived parameters and total bound across kappa_tilde.
    SweepKappa {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 5, 10, 20, 50])]
        kappas: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        cap: usize,
    },
    /// Run the randomized property suites.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: LevelArg,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Bound,
    Power,
}

impl GlobalArgs {
    fn flags(&self) -> Result<FlagOverrides, CliError> {
        Ok(FlagOverrides {
            seed: self.seed,
            reps: self.reps,
            engines: self.engines.clone(),
            variant: self.variant,
            spectrum_custom: self.spectrum_custom.as_deref().map(parse_eigenvalues).transpose()?,
        })
    }

    fn resolve(&self, preset: FigurePreset, panel: Option<&Panel>) -> Result<ExperimentConfig, CliError> {
        let spec = PresetSpec::new(preset);
        let panel = panel.unwrap_or(&spec.panels[0]);
        ExperimentConfig::from_preset(&spec, panel).layered(self.config.as_deref(), &self.sets, &self.flags()?)
    }
}

fn preset(name: &str) -> Result<FigurePreset, CliError> {
    name.parse().map_err(|e: asgd_core::Error| CliError::Config(e.to_string()))
}

fn figure(g: &GlobalArgs, name: &str) -> Result<Vec<Document>, CliError> {
    let p = preset(name)?;
    let spec = PresetSpec::new(p);
    let configs = spec.panels.iter().map(|panel| Ok((panel, g.resolve(p, Some(panel))?))).collect::<Result<Vec<_>, CliError>>()?;
    // Fail on an unresolved spectrum before any panel runs.
    configs[0].1.spectrum()?;
    let mut docs = Vec::new();
    for (panel, cfg) in configs {
        let rows = commands::run_grid(&cfg, &cfg.engines)?;
        docs.push(Document::results(format!("{p}_{}", panel.label), &format!("{p} panel {}", panel.label), &cfg, &rows));
    }
    Ok(docs)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if let Some(threads) = g.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    let base = || g.resolve(preset(&g.preset)?, None);
    let docs = match &cli.command {
        Command::Cutoffs { cap } => commands::cutoffs(&base()?, *cap)?,
        Command::Bound => commands::single_engine(&base()?, Engine::Bound)?,
        Command::Oracle => commands::single_engine(&base()?, Engine::Oracle)?,
        Command::Simulate => commands::single_engine(&base()?, Engine::Montecarlo)?,
        Command::Compare { cap } => commands::compare(&base()?, *cap)?,
        Command::Figure { preset } => figure(g, preset)?,
        Command::SweepKappa { kappas, cap } => commands::sweep_kappa(&base()?, kappas, *cap)?,
        Command::Verify { level, inject_fault } => {
            let opts = VerifyOptions {
                level: match level {
                    LevelArg::Fast => Level::Fast,
                    LevelArg::Full => Level::Full,
                },
                seed: g.seed.unwrap_or(0),
                fault: inject_fault.map(|f| match f {
                    FaultArg::Bound => Fault::BoundCoefficient,
                    FaultArg::Power => Fault::PowerCoefficient,
                }),
            };
            return commands::verify(&opts, g.out.as_deref());
        }
    };
    emit(&docs, g.out.as_deref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("asgd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
