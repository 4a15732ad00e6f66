//! Config-driven runner for the `twistprop` experiments.
//!
//! Exit codes: 0 completed, 1 usage or config error, 2 a hypothesis of the
//! underlying theorem does not hold, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{Context, Status};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    NotApplicable(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::NotApplicable(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::NotApplicable(m) => write!(f, "not applicable: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<twistprop::Error> for CliError {
    fn from(e: twistprop::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "twistprop", version, about = "Run twisted-convolution experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the artifacts.
    #[arg(long, default_value = "twistprop-out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the algebra and the config.
    Validate(RunArgs),
    /// Dump symplectic frames and their identity defects.
    Frame(RunArgs),
    /// Dump Schrodinger kernels and kernel domains.
    Kernel(RunArgs),
    /// Propagate a Gaussian and tabulate its norm and envelope.
    Propagate(RunArgs),
    /// Fit the two-sided heat-kernel bounds.
    Heat(RunArgs),
    /// Run the scalar and matrix Hardy certifiers on Gaussian data.
    Hardy(RunArgs),
    /// Run the uniqueness experiment.
    Uniqueness(RunArgs),
    /// Fast invariant suite.
    Selftest(RunArgs),
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
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
    let (cmd, args): (fn(&mut Context) -> Result<Status, CliError>, RunArgs) = match cli.command {
        Command::Validate(a) => (commands::validate, a),
        Command::Frame(a) => (commands::frame, a),
        Command::Kernel(a) => (commands::kernel, a),
        Command::Propagate(a) => (commands::propagate, a),
        Command::Heat(a) => (commands::heat, a),
        Command::Hardy(a) => (commands::hardy, a),
        Command::Uniqueness(a) => (commands::uniqueness, a),
        Command::Selftest(a) => (commands::selftest, a),
    };
    let result = Context::load(&args.config, &args.out, args.seed).and_then(|mut ctx| cmd(&mut ctx));
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::NotApplicable(m)) => {
            eprintln!("not applicable: {m}");
            2
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Sizes the global rayon pool from `TWISTPROP_THREADS`, when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TWISTPROP_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Config(format!("TWISTPROP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
