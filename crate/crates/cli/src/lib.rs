//! Command implementations behind the `agsim` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use agsim_core::scenario::{ConfigError, Scenario};
use agsim_core::tasks::{self, RunArtifacts, RunOptions, TaskError, REPORT_FILE, TABLE_FILE, TRAJECTORY_FILE};
use agsim_rpc::{EndpointConfig, ServeError, Server};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "agsim", version, about = "Air-ground co-simulation runner and RPC service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario to completion and write its artifacts.
    Run(RunArgs),
    /// Serve the scenario's vehicles over RPC, stepping in real time.
    Serve(ServeArgs),
    /// Render the tables for a finished run.
    Report(ReportArgs),
    /// Check a scenario config without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory. Defaults to the config's `outputs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Wall-clock pacing; 0 runs as fast as possible.
    #[arg(long)]
    pub realtime: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub realtime: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Artifacts directory written by `run`.
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task failed: {0}")]
    Task(#[from] TaskError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("missing artifact {missing} in {dir}; expected {}", expected.join(", "))]
    MissingArtifact {
        dir: PathBuf,
        missing: String,
        expected: Vec<String>,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    BadArtifact(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Task(_) => 3,
            CliError::Serve(ServeError::Bind { .. }) => 4,
            CliError::Serve(ServeError::BadPort(_)) => 2,
            CliError::MissingArtifact { .. } | CliError::Io { .. } | CliError::BadArtifact(_) => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Runs a scenario and writes its artifacts to the output directory.
pub fn cmd_run(args: &RunArgs) -> Result<(PathBuf, RunArtifacts), CliError> {
    let scenario = Scenario::load(&args.config)?;
    if let Some(f) = args.realtime {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(ConfigError::Invalid {
                field: "--realtime".into(),
                message: "must be a nonnegative number".into(),
            }
            .into());
        }
    }
    let out_dir = args.out.clone().unwrap_or_else(|| scenario.config.outputs.clone());
    let artifacts = tasks::run(
        &scenario,
        RunOptions {
            seed: args.seed,
            realtime_factor: args.realtime,
        },
    )?;
    artifacts
        .write_to(&out_dir)
        .map_err(io_err(format!("cannot write artifacts to {}", out_dir.display())))?;
    Ok((out_dir, artifacts))
}

/// Renders the tables stored in an artifacts directory.
pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let path = dir.join(REPORT_FILE);
    if !path.is_file() {
        return Err(CliError::MissingArtifact {
            dir: dir.to_path_buf(),
            missing: REPORT_FILE.to_string(),
            expected: [REPORT_FILE, TRAJECTORY_FILE, TABLE_FILE].map(String::from).to_vec(),
        });
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(format!("cannot read {}", path.display())))?;
    let report: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::BadArtifact(format!("{} is not valid JSON: {e}", path.display())))?;
    tasks::render_report(&report).map_err(|e| CliError::BadArtifact(format!("{}: {e}", path.display())))
}

/// Loads and validates a config; returns a one-line summary.
pub fn cmd_validate(config: &Path) -> Result<String, CliError> {
    let s = Scenario::load(config)?;
    Ok(format!(
        "{}: ok ({} task, {} vehicles, {} ticks)",
        config.display(),
        s.config.task.kind(),
        s.config.vehicles.len(),
        s.config.sim.total_ticks()
    ))
}

/// Starts the service and steps the simulation until `stop` is set.
/// `ready` receives the bound server once every endpoint listens.
pub fn cmd_serve(
    args: &ServeArgs,
    endpoints: EndpointConfig,
    stop: &AtomicBool,
    ready: impl FnOnce(&Server),
) -> Result<u64, CliError> {
    let scenario = Scenario::load(&args.config)?;
    if !(args.realtime > 0.0 && args.realtime.is_finite()) {
        return Err(ConfigError::Invalid {
            field: "--realtime".into(),
            message: "serve needs a positive factor".into(),
        }
        .into());
    }
    let mut sim = tasks::build_simulation(&scenario, args.seed).map_err(TaskError::from)?;
    // a long-lived service must not grow its trajectory log without bound
    sim.set_recording(false);
    let server = Server::start(endpoints, sim.handle())?;
    ready(&server);
    let stats = sim.run_realtime(args.realtime, stop, None, |_| {});
    server.shutdown();
    Ok(stats.ticks)
}

/// Prints the bound endpoints, one per line.
pub fn print_endpoints(server: &Server, mut w: impl Write) {
    for (kind, addr) in server.addrs() {
        let _ = writeln!(w, "{kind} {addr}");
    }
    let _ = w.flush();
}
