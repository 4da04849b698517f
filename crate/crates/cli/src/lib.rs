//! The `filtra` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or fitting
//! errors (with a JSON error record on stderr).

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{EvaluateArgs, FitArgs, PathArgs, PredictArgs, ReportArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "filtra", version, about = "Multiscale shared-structure learning for functional regression")]
pub struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Compute the grouping path.
    Path(PathArgs),
    /// Learn the forest and fit the model.
    Fit(FitArgs),
    /// Predict from a fitted model.
    Predict(PredictArgs),
    /// Component importance, intervals and shared-layer counts.
    Report(ReportArgs),
    /// Run the replication study.
    Evaluate(EvaluateArgs),
}

/// Failure of a subcommand.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data {
        error: filtra_core::Error,
        file: Option<PathBuf>,
    },
}

impl From<filtra_core::Error> for CliError {
    fn from(error: filtra_core::Error) -> Self {
        CliError::Data { error, file: None }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data {
            error: filtra_core::Error::Io(e),
            file: None,
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> serde_json::Value {
        use filtra_core::Error as E;
        match self {
            CliError::Usage(m) => serde_json::json!({
                "version": filtra_core::FORMAT_VERSION,
                "kind": "usage",
                "message": m,
            }),
            CliError::Data { error, file } => {
                let mut v = serde_json::json!({
                    "version": filtra_core::FORMAT_VERSION,
                    "kind": error.kind(),
                    "message": error.to_string(),
                });
                match error {
                    E::Csv { line, .. } => v["line"] = (*line).into(),
                    E::Schema { expected, found } => {
                        v["expected"] = expected.as_str().into();
                        v["found"] = found.as_str().into();
                    }
                    E::DegeneratePredictor { index } => v["predictor"] = (index + 1).into(),
                    E::Convergence { lambda, iterations, .. } => {
                        v["lambda"] = (*lambda).into();
                        v["iterations"] = (*iterations).into();
                    }
                    _ => {}
                }
                if let Some(f) = file {
                    v["file"] = f.display().to_string().into();
                }
                v
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn configure_threads() -> CliResult<()> {
    let Some(v) = std::env::var_os("FILTRA_THREADS") else { return Ok(()) };
    let n: usize = v
        .to_str()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FILTRA_THREADS must be a positive integer, got {v:?}")))?;
    // Fails only if a pool already exists, e.g. when called twice in tests.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the subcommand; returns the process exit code.
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
    let _ = env_logger::Builder::new().filter_level(cli.log_level).try_init();
    let result = configure_threads().and_then(|_| dispatch(cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Data { .. } => eprintln!("{}", e.to_json()),
            }
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Path(a) => commands::path(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Report(a) => commands::report(a),
        Command::Evaluate(a) => commands::evaluate(a),
    }
}
