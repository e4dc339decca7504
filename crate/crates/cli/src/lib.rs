//! Command-line front end: solves, certifications, stochastic runs and
//! parameter sweeps with CSV traces and JSON certificates.

pub mod commands;
pub mod config;
pub mod output;
pub mod plugin;
pub mod problem;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfigFile;

/// Process exit codes.
pub const EXIT_CERTIFIED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "SADDLE_ESCAPE_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{key}: {message}")]
    Config { key: String, message: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] saddle_escape_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "saddle-escape", version, about = "Second-order stationary points over ellipsoid intersections")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Default, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for stochastic runs and sweeps (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replaces the stochastic seed list with this seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Escape backend: auto, exact-trs, brute-force or plugin:<command>.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Multiplier on the planned stochastic batch sizes.
    #[arg(long = "batch-scale", global = true)]
    pub batch_scale: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the deterministic solver; exit 0 if certified, 2 if not.
    Solve,
    /// Check a point; exit 0 if it is second-order stationary, 2 if not.
    Certify {
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Run the stochastic solver over the configured seeds.
    Stochastic,
    /// Run a grid of (epsilon, gamma) values and fit iteration-count slopes.
    Sweep,
    /// Answer one tangent subproblem read as JSON on stdin.
    PluginServe {
        /// Declared approximation factor.
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Multiplies the exact minimiser before answering.
        #[arg(long, default_value_t = 1.0)]
        shrink: f64,
    },
}

/// Installs the logger once; later calls are no-ops.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_CERTIFIED };
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
