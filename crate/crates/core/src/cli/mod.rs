//! The `ris-predict` command line.
//!
//! Every subcommand writes its CSV files and a `manifest.json` into the
//! output directory. Exit status is 0 on success, 2 for bad flags or
//! configuration and 1 for failures while running.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{resolve, RunConfig};
pub use manifest::{sha256_hex, Manifest};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "RIS_PREDICT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<config::ConfigLoadError> for CliError {
    fn from(e: config::ConfigLoadError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ris-predict", version, about = "RIS channel estimation, decomposition and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON or TOML run configuration, or a previous manifest.json.
    #[arg(long)]
    config: Option<String>,
    /// System preset: table3, table3-desk or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory [default: runs/<subcommand>].
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a training/validation dataset.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// dataset.bin written by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Write an all-zero model instead of training.
        #[arg(long)]
        zero_init: bool,
    },
    /// Run the online estimate-then-predict loop on one episode.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// NMSE of one or more models against SNR and prediction step.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model checkpoints (repeatable).
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
    },
    /// Pilot overhead, feasibility thresholds and counts.
    Overhead {
        #[command(flatten)]
        common: Common,
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long = "S")]
        s: Option<usize>,
        #[arg(long = "N")]
        n: Option<usize>,
        /// Large coherence time in slots [default: 5000].
        #[arg(long = "TL")]
        tl: Option<u64>,
        /// PARAFAC-VAMP pilot count [default: ceil(N/M)].
        #[arg(long = "P")]
        p: Option<u64>,
        /// Evenly spaced T_S values in (0, T_L] [default: 50].
        #[arg(long)]
        points: Option<u64>,
    },
    /// Average downlink sum rate against T_S.
    Sumrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen { common } => commands::gen(&common),
        Command::Train { common, data, zero_init } => commands::train(&common, &data, zero_init),
        Command::Predict { common, model } => commands::predict(&common, &model),
        Command::Eval { common, model } => commands::eval(&common, &model),
        Command::Overhead {
            common,
            m,
            k,
            s,
            n,
            tl,
            p,
            points,
        } => commands::overhead(&common, commands::OverheadArgs { m, k, s, n, tl, p, points }),
        Command::Sumrate { common, model } => commands::sumrate(&common, model.as_deref()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
