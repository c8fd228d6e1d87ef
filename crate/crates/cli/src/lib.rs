//! Command-line front end for contactum.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 empty final
//! constraint set, 3 rank failure, 4 integration failure, 5 a reproduction
//! row failed.

pub mod analyze;
pub mod config;
pub mod integrate;
pub mod output;
pub mod reproduce;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;
pub const EXIT_RANK: i32 = 3;
pub const EXIT_INTEGRATION: i32 = 4;
pub const EXIT_REPRODUCE_FAIL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "contactum",
    version,
    about = "Contact and precontact mechanics toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the constraint algorithm and bracket analysis on a system.
    Analyze(AnalyzeArgs),
    /// Integrate the equations of motion and write a CSV trajectory.
    Integrate(IntegrateArgs),
    /// Recompute a worked example and check it against expected values.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Plain,
    Reeb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleId {
    Example1,
    Example2,
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleId::Example1 => "example1",
            ExampleId::Example2 => "example2",
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ToleranceArgs {
    /// Relative singular value threshold for numerical ranks.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Relative step of finite-difference cross-checks.
    #[arg(long)]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub config: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
    pub variant: VariantArg,
    /// Seed for the validation sample perturbations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IntegrateArgs {
    pub config: PathBuf,
    /// CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial point as a comma separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Final time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Step size.
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub example: ExampleId,
    /// Output directory for the report bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the sample points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl fmt::Display) -> Failure {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::new(EXIT_USAGE, e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match output::thread_pool() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Integrate(args) => integrate::run(args),
        Command::Reproduce(args) => reproduce::run(args),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
