use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};

use clap::{Args, Parser, Subcommand};
use dqpt_cli::analyze::analyze;
use dqpt_cli::config::{Mode, RawConfig, RunConfig};
use dqpt_cli::exit;
use dqpt_cli::run::{run, RunError};
use dqpt_cli::sweep::{parse_sweep, sweep};
use dqpt_core::numerics::{preferred_openblas_core, OPENBLAS_CORETYPE};

#[derive(Parser)]
#[command(name = "dqpt", version, about = "Quench simulations of dynamical quantum phase transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override a config field; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// iTEBD evolution of an infinite chain.
    Evolve(Common),
    /// Closed-form χ = 2 ansatz states.
    Ansatz(Common),
    /// Exact diagonalization of a periodic ring.
    Ed(Common),
    /// Re-analyze the CSV of a finished run.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Validate row invariants; exit 3 on violation.
        #[arg(long)]
        check: bool,
    },
    /// One run per value of one or more scalar fields.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Field name, or comma-separated names varied jointly.
        #[arg(long)]
        param: String,
        /// Comma-separated values; joint values separated by ':'.
        #[arg(long, allow_hyphen_values = true, default_value = "")]
        values: String,
    },
}

fn load(common: &Common, mode: Option<Mode>) -> Result<(RawConfig, RunConfig), RunError> {
    let mut raw = RawConfig::load(&common.config)?;
    if let Some(mode) = mode {
        raw.set_value("mode", mode.label(), "subcommand")?;
    }
    for s in &common.set {
        raw.set(s)?;
    }
    let cfg = raw.resolve()?;
    Ok((raw, cfg))
}

fn single(common: &Common, mode: Mode) -> Result<i32, RunError> {
    let (_, cfg) = load(common, Some(mode))?;
    let outcome = run(&cfg, &common.out)?;
    for e in &outcome.events {
        let label = e.kind().map(|k| k.label()).unwrap_or("unclassified");
        println!("event t = {:.4}: {label}", e.event.time);
    }
    println!("wrote {}", outcome.artifacts.csv.display());
    Ok(if outcome.completed() { exit::OK } else { exit::NUMERICAL })
}

fn analyze_cmd(common: &Common, check: bool) -> Result<i32, RunError> {
    let (_, cfg) = load(common, None)?;
    let outcome = analyze(&cfg, &common.out, check)?;
    for e in &outcome.events {
        let label = e.kind().map(|k| k.label()).unwrap_or("unclassified");
        println!("event t = {:.4}: {label}", e.event.time);
    }
    for v in &outcome.violations {
        eprintln!("check failed at t = {}: {}", v.time, v.what);
    }
    Ok(if outcome.violations.is_empty() { exit::OK } else { exit::NUMERICAL })
}

fn sweep_cmd(common: &Common, param: &str, values: &str) -> Result<i32, RunError> {
    let (raw, _) = load(common, None)?;
    let (params, tuples) = parse_sweep(param, values)?;
    let outcome = sweep(&raw, &params, &tuples, &common.out)?;
    for e in &outcome.entries {
        println!("{}: {}", e.dir.display(), e.status());
    }
    println!("wrote {}", outcome.summary.display());
    Ok(if outcome.all_succeeded() { exit::OK } else { exit::NUMERICAL })
}

fn report(e: &RunError, config: &Path) -> i32 {
    match e {
        RunError::Config(c) => {
            eprintln!("config error: {c}");
            exit::CONFIG
        }
        RunError::Io(io) => {
            eprintln!("{}: {io}", config.display());
            exit::IO
        }
    }
}

/// Re-runs the process with OpenBLAS pointed at the CPU's vector kernels,
/// unless the variable is already set. Returns the child's exit code.
fn relaunch_with_blas_kernels() -> Option<ExitCode> {
    if std::env::var_os(OPENBLAS_CORETYPE).is_some() {
        return None;
    }
    let core = preferred_openblas_core()?;
    let exe = std::env::current_exe().ok()?;
    let status = Process::new(exe).args(std::env::args_os().skip(1)).env(OPENBLAS_CORETYPE, core).status().ok()?;
    Some(ExitCode::from(status.code().unwrap_or(exit::NUMERICAL) as u8))
}

fn main() -> ExitCode {
    if let Some(code) = relaunch_with_blas_kernels() {
        return code;
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, result) = match &cli.command {
        Command::Evolve(c) => (c, single(c, Mode::Evolve)),
        Command::Ansatz(c) => (c, single(c, Mode::Ansatz)),
        Command::Ed(c) => (c, single(c, Mode::Ed)),
        Command::Analyze { common, check } => (common, analyze_cmd(common, *check)),
        Command::Sweep { common, param, values } => (common, sweep_cmd(common, param, values)),
    };
    let code = result.unwrap_or_else(|e| report(&e, &common.config));
    ExitCode::from(code as u8)
}
