//! `ccm`: synthesize, verify and exercise control contraction metrics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;
pub const EXIT_DEGRADED: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ccm_core::config::ConfigError),
    #[error(transparent)]
    Document(#[from] ccm_core::document::DocumentError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Degraded(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Document(_) | CliError::Write { .. } => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
            CliError::Degraded(_) => EXIT_DEGRADED,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ccm", version, about = "Control contraction metric synthesis, verification and simulation")]
struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize and verify a certificate from a scenario config.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a certificate at low-discrepancy samples.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Scrambles the sample sequence; 0 keeps the plain sequence.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for verification.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimizing path between two states under the certificate's metric.
    Geodesic {
        #[arg(long)]
        cert: PathBuf,
        /// Start point, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x1: String,
        /// End point, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x2: String,
        #[arg(long, default_value_t = 32)]
        segments: usize,
        /// Directory for geodesic.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop run of the configured scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Certificate (default: the one `synthesize` writes for this config).
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Guaranteed-cost bound from `x0` when tracking a trajectory through `xstar`.
    Bound {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, allow_hyphen_values = true)]
        xstar: String,
    },
    /// Write a bundled scenario config.
    Example {
        name: String,
        /// Directory for `<name>.json`; prints to standard output otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Synthesize { config, out } => commands::synthesize(&config, out.as_deref()),
        Command::Verify {
            cert,
            samples,
            seed,
            out,
        } => commands::verify(&cert, samples, seed, out.as_deref()),
        Command::Geodesic {
            cert,
            x1,
            x2,
            segments,
            out,
        } => commands::geodesic(&cert, &x1, &x2, segments, out.as_deref()),
        Command::Simulate { config, cert, out } => commands::simulate(&config, cert.as_deref(), out.as_deref()),
        Command::Bound { cert, x0, xstar } => commands::bound(&cert, &x0, &xstar),
        Command::Example { name, out } => commands::example(&name, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
