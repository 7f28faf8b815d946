//! `hcqed`: figure series, gate tables, calibration and sweeps for the
//! hybrid circuit-QED toolkit, all written as deterministic CSV.

pub mod commands;
pub mod config;
pub mod csv;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use hybrid_cqed::device::DeviceError;
use hybrid_cqed::dissipation::DissipationError;
use hybrid_cqed::fockspace::FockError;
use hybrid_cqed::gates::{EngineKind, GateError};
use hybrid_cqed::propagator::PropagatorError;

use commands::{Figure, GateKind, Task};
use config::RunConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

impl From<FockError> for CliError {
    fn from(e: FockError) -> Self {
        match e {
            FockError::Degenerate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        match e {
            PropagatorError::InvalidArgument(_) => CliError::Config(e.to_string()),
            PropagatorError::Device(d) => d.into(),
            PropagatorError::Fock(f) => f.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GateError> for CliError {
    fn from(e: GateError) -> Self {
        match e {
            GateError::InvalidArgument(_) | GateError::Schedule(_) => CliError::Config(e.to_string()),
            GateError::Fock(f) => f.into(),
            GateError::Device(d) => d.into(),
            GateError::Propagator(p) => p.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DissipationError> for CliError {
    fn from(e: DissipationError) -> Self {
        match e {
            DissipationError::InvalidArgument(_) => CliError::Config(e.to_string()),
            DissipationError::Fock(f) => f.into(),
            DissipationError::Gate(g) => g.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Effective,
    Exact,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Effective => EngineKind::Effective,
            EngineArg::Exact => EngineKind::Exact,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hcqed", version, about = "Hybrid circuit-QED simulator: figure series, gate tables, calibration, sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// `section.key = value` config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path (written atomically); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides protocol.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "effective")]
    pub engine: EngineArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Figure series.
    Figure { figure: Figure },
    /// Truth table or branch log of a protocol.
    Gate { gate: GateKind },
    /// Calibrated g and φ for the configured target.
    Calibrate,
    /// Repeats a command over sweep.values of sweep.key.
    Sweep {
        #[command(subcommand)]
        inner: SweepCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    Figure { figure: Figure },
    Gate { gate: GateKind },
    Calibrate,
}

/// Runs a parsed command line; the error carries the exit code.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.protocol.seed = seed;
    }
    let engine = cli.engine.into();
    let task = |c: &SweepCommand| match c {
        SweepCommand::Figure { figure } => Task::Figure(*figure),
        SweepCommand::Gate { gate } => Task::Gate(*gate, engine),
        SweepCommand::Calibrate => Task::Calibrate,
    };
    let series = match &cli.command {
        Command::Figure { figure } => commands::run(Task::Figure(*figure), &cfg)?,
        Command::Gate { gate } => commands::run(Task::Gate(*gate, engine), &cfg)?,
        Command::Calibrate => commands::run(Task::Calibrate, &cfg)?,
        Command::Sweep { inner } => commands::run_sweep(task(inner), &cfg)?,
    };
    match &cli.out {
        Some(path) => series.write_atomic(path),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(series.render().as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// The one-line reason printed on stderr.
pub fn error_line(e: &CliError) -> String {
    format!("error kind={} code={}: {}", e.kind(), e.exit_code(), e.to_string().replace('\n', " "))
}
