//! Command-line driver: JSON config in, JSON (or CSV) report and field files out.
//!
//! Exit codes: 0 success, 2 bad input (missing file, parse or validation
//! error, unusable output directory), 3 solver error or non-convergence,
//! 4 a verification check failed.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

pub use config::{parse_config, RunConfig};
pub use report::{validate_report, Check, Format, Relation, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECKS: i32 = 4;

pub const COMMANDS: [&str; 7] = [
    "solve-min",
    "solve-mp",
    "verify",
    "bubble",
    "appendix",
    "concentration",
    "threshold",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_INPUT,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<fracpass::Error> for CliError {
    fn from(e: fracpass::Error) -> Self {
        use fracpass::Error as E;
        match e {
            E::Config(_) | E::H1(_) => CliError::Config(e.to_string()),
            E::Format(_) | E::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SolveMin,
    SolveMp,
    Verify,
    Bubble,
    Appendix,
    Concentration,
    Threshold,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveMin => "solve-min",
            Command::SolveMp => "solve-mp",
            Command::Verify => "verify",
            Command::Bubble => "bubble",
            Command::Appendix => "appendix",
            Command::Concentration => "concentration",
            Command::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracpass", version, about = "Fractional critical-growth experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for the report and field files (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; falls back to FRACPASS_THREADS, then to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Field file with a precomputed local minimum (solve-mp, threshold).
    #[arg(long)]
    pub u_eps: Option<PathBuf>,
}

fn thread_count(cli: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(k) = cli {
        return Ok(Some(k));
    }
    match std::env::var("FRACPASS_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("FRACPASS_THREADS = '{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Run one command and write its report. Returns the report and exit code;
/// errors before a report exists come back as `Err`.
pub fn execute(
    command: Command,
    cfg: &RunConfig,
    out: &Path,
    format: Format,
    u_eps: Option<&Path>,
) -> Result<(RunReport, i32), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    let start = Instant::now();
    let mut ctx = commands::Context::new(command, cfg, out, u_eps)?;
    let outcome = match command {
        Command::SolveMin => commands::solve_min(&mut ctx).map(|_| ()),
        Command::SolveMp => commands::solve_mp(&mut ctx),
        Command::Verify => commands::verify(&mut ctx),
        Command::Bubble => commands::bubble(&mut ctx),
        Command::Appendix => commands::appendix(&mut ctx),
        Command::Concentration => commands::concentration(&mut ctx),
        Command::Threshold => commands::threshold(&mut ctx),
    };
    let code = match &outcome {
        Err(e) => {
            ctx.report.output("error", &e.to_string());
            e.exit_code()
        }
        Ok(()) if ctx.unconverged => EXIT_SOLVER,
        Ok(()) if !ctx.report.failed_checks().is_empty() => EXIT_CHECKS,
        Ok(()) => EXIT_OK,
    };
    let mut report = ctx.report;
    report.exit_code = code;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    report.write(out, format)?;
    Ok((report, code))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = parse_config(&cli.config)?;
    let threads = thread_count(cli.threads)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        pool = pool.num_threads(k);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let (report, code) =
        pool.install(|| execute(cli.command, &cfg, &cli.out, cli.format, cli.u_eps.as_deref()))?;
    for c in report.failed_checks() {
        eprintln!("check failed: {} = {} (limit {:?} {})", c.name, c.value, c.relation, c.limit);
    }
    if let Some(e) = report.outputs.get("error") {
        eprintln!("error: {}", e.as_str().unwrap_or_default());
    }
    println!(
        "{}: {} of {} checks passed, exit {code}",
        report.command,
        report.checks.len() - report.failed_checks().len(),
        report.checks.len()
    );
    Ok(code)
}

/// Parse arguments, run, and return the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
