//! Batch driver for the Choquard solvers: parses a JSON run configuration,
//! runs one pipeline and leaves JSON reports, CSV tables and CHQF fields in
//! an output directory.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{load_config, parse_config, Mode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] choquard_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "choquard", version, about = "Groundstates and nodal solutions of the Choquard equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Least-action positive solution at one exponent.
    Groundstate(RunArgs),
    /// Least-action sign-changing solution at one exponent `p > 2`.
    Nodal(RunArgs),
    /// Nodal solutions down a decreasing `p` schedule, then the `p = 2` polish.
    Continuation(RunArgs),
    /// Groundstate levels over a list of exponents.
    Levels(RunArgs),
    /// Energies and diagnostics of a stored field.
    Validate(RunArgs),
    /// FFT convolution against the direct sum, with timings.
    ConvolveBench {
        #[arg(long)]
        dim: usize,
        #[arg(long = "M")]
        points_per_axis: usize,
        /// Defaults to 2 in three dimensions and `N/2` otherwise.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        box_length: f64,
        #[arg(long, default_value_t = config::DEFAULT_SEED)]
        seed: u64,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("choquard: {e}");
            e.exit_code()
        }
    }
}
