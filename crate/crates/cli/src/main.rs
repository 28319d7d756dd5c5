//! `nvsim`: reproducible experiment runner for the NV-center simulator.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Run;

/// Bad arguments or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "nvsim", version, about = "Optically pumped NV-center electron/nuclear spin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: the config's output_dir, else ./out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Root seed for readout noise and bootstrap resampling; overrides the config.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// (V/2) cos(theta + phi) + B
    Ramsey,
    /// Saturation of fluorescence with laser power, both functional forms
    Saturation,
    /// Three hyperfine-split Lorentzians
    Triplet,
    /// Two decaying sinusoids split by C_par
    T2star,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Ramsey => "ramsey",
            FitModel::Saturation => "saturation",
            FitModel::Triplet => "triplet",
            FitModel::T2star => "t2star",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Readout contrast of all nine ground basis states versus field
    ContrastSweep,
    /// Ramsey visibility and phase versus repump time, one CSV per Ramsey kind
    Repump,
    /// Nuclear process fidelity over a field x pump-time grid
    FidelityMap,
    /// Closed-form transverse phase susceptibility versus field
    PhaseSusceptibility,
    /// Qutrit state tomography of the prepared thermal electron state
    Tomography,
    /// Nuclear polarization after optical pumping
    Polarization,
    /// Locate the excited-state anti-crossing and tabulate its gap
    Eslac,
    /// Fit a model to two columns of a CSV file
    Fit {
        /// CSV with x and y columns and an optional header row
        input: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        /// x column name (header required) [default: first column]
        #[arg(long)]
        x: Option<String>,
        /// y column name (header required) [default: second column]
        #[arg(long)]
        y: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ContrastSweep => "contrast-sweep",
            Command::Repump => "repump",
            Command::FidelityMap => "fidelity-map",
            Command::PhaseSusceptibility => "phase-susceptibility",
            Command::Tomography => "tomography",
            Command::Polarization => "polarization",
            Command::Eslac => "eslac",
            Command::Fit { .. } => "fit",
        }
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    #[serde(flatten)]
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<FitModel>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let threads = match cli.threads {
        Some(0) => return Err(UsageError("--threads must be at least 1".into()).into()),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let mut record = Run::new(&out)?;
    match &cli.command {
        Command::ContrastSweep => commands::contrast_sweep(&cfg, &mut record)?,
        Command::Repump => commands::repump(&cfg, &mut record)?,
        Command::FidelityMap => commands::fidelity_map(&cfg, &mut record)?,
        Command::PhaseSusceptibility => commands::phase_susceptibility(&cfg, &mut record)?,
        Command::Tomography => commands::tomography(&cfg, &mut record)?,
        Command::Polarization => commands::polarization(&cfg, &mut record)?,
        Command::Eslac => commands::eslac(&cfg, &mut record)?,
        Command::Fit { input, model, x, y } => {
            commands::fit(&cfg, &mut record, input, *model, x.as_deref(), y.as_deref())?
        }
    }
    let (input, model) = match &cli.command {
        Command::Fit { input, model, .. } => (Some(input.display().to_string()), Some(*model)),
        _ => (None, None),
    };
    record.finish(cli.command.name(), cfg.seed, threads, &Echo { config: &cfg, input, model })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
