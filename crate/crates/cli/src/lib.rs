//! `sphflow` command line: thin adapters over `sphflow-core`, plus the
//! session service used by the browser console.

pub mod commands;
pub mod http_planner;
pub mod repl;
pub mod service;

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use sphflow_core::orchestrator::{Planner, ScriptedPlanner};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad input from the user; exit code 2.
    Usage(String),
    /// Anything that went wrong while doing the work; exit code 1.
    Failed(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self::Failed(e.into())
    }
}

pub type CliResult = Result<i32, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "sphflow", version, about = "Particle-based debris-flow workbench")]
pub struct Cli {
    /// Root directory for every file a command writes.
    #[arg(long, global = true, default_value = "sphflow-out")]
    pub out: PathBuf,
    /// Planner backend: `mock` (built-in rules), `mock:<script.json>` or
    /// `http:<endpoint>`. The HTTP backend sends `SPHFLOW_PLANNER_TOKEN` as a
    /// bearer token when set.
    #[arg(long, global = true, default_value = "mock")]
    pub planner: String,
    /// Revision rounds after which a session is tagged unconverged.
    #[arg(long, global = true, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub hitl_cap: u32,
    /// Planner HTTP timeout, seconds.
    #[arg(long, global = true, default_value_t = 120)]
    pub planner_timeout: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Case document utilities.
    #[command(subcommand)]
    Case(CaseCommand),
    /// Generate particles and a preview image.
    Gen(CaseArg),
    /// Check generated geometry against a reference case.
    Check(CheckArgs),
    /// Run a case through the full pipeline.
    Run(RunArgs),
    /// Run one analysis tool on a run directory (`analyze list` shows tools).
    Analyze(AnalyzeArgs),
    /// Interactive sessions.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Evaluation reports from scored records.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct CaseArg {
    /// Case document path, or a built-in case id (C1..C5, hydrostatic).
    pub case: String,
    /// Output name under the output root; defaults to the case name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum CaseCommand {
    /// Parse and check a case document.
    Validate {
        case: String,
    },
    /// Write the canonical document of a case.
    Emit(CaseArg),
    /// Structural differences between two cases.
    Diff {
        reference: String,
        candidate: String,
        /// Length tolerance, m.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Reference case: a built-in id (its contact pairs included) or a
    /// document path.
    #[arg(long)]
    pub reference: String,
    /// Extent tolerance for document references, m.
    #[arg(long, default_value_t = 0.01)]
    pub dim_tol: f64,
    /// Origin tolerance for document references, m; defaults to dp/2.
    #[arg(long)]
    pub pos_tol: Option<f64>,
    /// Required fluid/wall contact as FLUID:WALL group ids.
    #[arg(long = "contact")]
    pub contacts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Validate against this built-in reference before solving.
    #[arg(long)]
    pub reference: Option<String>,
    /// Write CSV frames only.
    #[arg(long)]
    pub csv_only: bool,
    /// Override the end time, s.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Override the output interval, s.
    #[arg(long)]
    pub interval: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Tool name, or `list`.
    pub tool: String,
    /// Run directory written by `run`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Output name under `<out>/analysis`; defaults to the tool name.
    #[arg(long)]
    pub name: Option<String>,
    /// Tool arguments as `--key value` pairs. Comma lists become vectors;
    /// `--plane px,py,pz,nx,ny,nz` sets plane_point and plane_normal.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub args: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Reference case id used to validate drafts.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Terminal-driven session.
    Repl(ReplArgs),
}

#[derive(Debug, Args)]
pub struct ReplArgs {
    /// Scenario description.
    #[arg(long)]
    pub text: Option<String>,
    /// Sketch or photo to attach.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Existing case document to start from.
    #[arg(long)]
    pub xml: Option<PathBuf>,
    /// Reference case id used to validate drafts.
    #[arg(long)]
    pub reference: Option<String>,
    /// Session name under `<out>/sessions`.
    #[arg(long, default_value = "repl")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct EvalInput {
    /// Records CSV; defaults to the bundled benchmark records.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Zero-shot pass rate and mean revision rounds per case and modality.
    Geometry {
        #[command(flatten)]
        input: EvalInput,
        #[arg(long, default_value_t = 5)]
        cap: u32,
    },
    /// Pass rates per task type.
    Tasks(EvalInput),
    /// Pass rates per task type and prompt clarity.
    Pc(EvalInput),
}

pub type PlannerFactory = Arc<dyn Fn() -> Box<dyn Planner> + Send + Sync>;

/// Build a planner constructor from a `--planner` value.
pub fn planner_factory(spec: &str, timeout: Duration) -> Result<PlannerFactory, CliError> {
    if spec == "mock" {
        return Ok(Arc::new(|| Box::new(ScriptedPlanner::builtin())));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("planner script {path}: {e}")))?;
        let planner = ScriptedPlanner::from_json(&text).map_err(|e| usage(format!("planner script {path}: {e}")))?;
        return Ok(Arc::new(move || Box::new(planner.clone())));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        return Ok(Arc::new(move || Box::new(http_planner::HttpPlanner::new(&url, timeout))));
    }
    Err(usage(format!("unknown planner backend '{spec}'; use mock, mock:<script.json> or http:<endpoint>")))
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            EXIT_FINDINGS
        }
    }
}
