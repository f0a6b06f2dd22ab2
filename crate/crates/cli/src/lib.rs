//! Experiment runner behind the `basisop` binary.
//!
//! Every subcommand resolves a config (preset, optional TOML file, flags),
//! writes CSV and SVG artifacts into the output directory, and finishes with
//! a manifest holding the config hash and the SHA-256 of each artifact.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod reproduce;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use basisop::trainer::{Experiment, Scale};
use clap::{Parser, Subcommand, ValueEnum};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration.
    Config(String),
    /// A numerical routine failed.
    Numerical(String),
    /// `reproduce` finished but missed its tolerance table.
    Threshold(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Threshold(misses) => write!(f, "tolerance check failed: {}", misses.join("; ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<basisop::Error> for CliError {
    fn from(e: basisop::Error) -> Self {
        use basisop::Error as E;
        match e {
            E::InvalidParameter(_) | E::Format(_) | E::Io(_) | E::GridMismatch { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Circle,
    PerturbedCat,
    ConjugatedCat,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Circle => Experiment::Circle,
            ExperimentArg::PerturbedCat => Experiment::PerturbedCat,
            ExperimentArg::ConjugatedCat => Experiment::ConjugatedCat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Table3,
    Table4,
    Table5,
    Fig6,
}

#[derive(Debug, Parser)]
#[command(name = "basisop", version, about = "Learned-basis transfer operator experiments")]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub scale: Option<ScaleArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and cache the train/validation/test functions.
    GenData {
        #[arg(value_enum)]
        experiment: Option<ExperimentArg>,
    },
    /// Train a model and keep the best validated checkpoint.
    Train {
        #[arg(value_enum)]
        experiment: Option<ExperimentArg>,
    },
    /// Eigenvalues, eigenfunctions and Gram matrix of a trained model.
    Spectrum {
        #[arg(value_enum)]
        experiment: Option<ExperimentArg>,
        /// Defaults to `checkpoint.bin` in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reference SRB density from a large Fourier-Galerkin operator.
    Srb {
        #[arg(value_enum)]
        experiment: Option<ExperimentArg>,
    },
    /// Fourier-Galerkin projection and approximation errors.
    Baseline {
        #[arg(value_enum)]
        experiment: Option<ExperimentArg>,
        /// Real Fourier modes per dimension.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Regenerate a table or figure and check it against embedded tolerances.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        /// Only the Fourier row of table4/table5; no training.
        #[arg(long)]
        fourier_only: bool,
        /// Reuse a trained circle checkpoint for fig6.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Parse arguments, run, report, and return the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}
