#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

/// Desk-scale TWPA entanglement toolkit.
#[derive(Debug, Parser)]
#[command(name = "kerrfree", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SNAIL and array coefficients over a flux sweep, plus Kerr-free points.
    SnailSweep(commands::SnailSweepArgs),
    /// Synthetic ON/OFF records and a ground-truth manifest.
    Simulate(commands::SimulateArgs),
    /// Calibrated covariances and entanglement metrics from records.
    Analyze(commands::AnalyzeArgs),
    /// Gain, loss and ν̃_min of the distributed line over a χ grid.
    PropagationProfile(commands::ProfileArgs),
    /// System gain and noise temperature from a Johnson-Nyquist sweep.
    JohnsonFit(commands::JohnsonArgs),
}

/// Bad invocation or configuration; exits with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(kerrfree::Error::NumericFailure { .. }) = cause.downcast_ref::<kerrfree::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
