//! The `nvmag` command set.
//!
//! Every command reads one JSON config document (`--config`, optional; `{}`
//! means all defaults), writes its artifacts into `--out`, and records the
//! fully resolved config next to them as `config.json`. Passing that file
//! back through `--config` reproduces every artifact bit for bit.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::dsp::DspError;
use crate::pipeline::PipelineError;
use crate::reconstruction::ReconstructionError;
use crate::sensitivity::SensitivityError;
use crate::stream::StreamError;
use crate::synth::SynthError;
use crate::walsh::WalshError;

pub use commands::execute;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("I/O: {0}")]
    Io(String),
    #[error("invalid input: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::NonConvergence(_)
            | CalibrationError::Degenerate(_)
            | CalibrationError::PoorLinearity { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<ReconstructionError> for CliError {
    fn from(e: ReconstructionError) -> Self {
        match e {
            ReconstructionError::NonConvergence(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Calibration(c) => c.into(),
            DspError::UnstableFilter { .. } | DspError::ZeroReference(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<WalshError> for CliError {
    fn from(e: WalshError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Schema(m),
            PipelineError::Calibration(e) => e.into(),
            PipelineError::Synth(e) => e.into(),
            PipelineError::Dsp(e) => e.into(),
            PipelineError::Reconstruction(e) => e.into(),
            PipelineError::Sensitivity(e) => e.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nvmag", version, about = "Four-axis NV-diamond vector magnetometry toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config document; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config's `seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit bias field, zero-field splitting and strain shifts to eight ODMR line centers.
    FitBias,
    /// Sensing matrix and pseudoinverse at the fitted (or given) operating point.
    Linearize,
    /// Synthesize the detector and reference voltages.
    Synth,
    /// Lock-in demodulation of a synthesized or recorded PL stream to frequency shifts.
    Demod,
    /// Frequency-shift streams to lab-frame field streams.
    Reconstruct,
    /// Calibrate, synthesize, demodulate and reconstruct in one run.
    Pipeline,
    /// Shot-noise-limited sensitivity budget.
    Sensitivity,
    /// Walsh-coded simultaneous Ramsey Monte-Carlo.
    Walsh,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitBias => "fit-bias",
            Command::Linearize => "linearize",
            Command::Synth => "synth",
            Command::Demod => "demod",
            Command::Reconstruct => "reconstruct",
            Command::Pipeline => "pipeline",
            Command::Sensitivity => "sensitivity",
            Command::Walsh => "walsh",
        }
    }
}

/// Parse arguments, run, report errors on stderr, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, cli.config.as_deref(), cli.seed, &cli.out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("nvmag {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
