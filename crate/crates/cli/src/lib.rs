//! Config-driven experiment runner behind the `mflab` binary.
//!
//! Every subcommand reads one JSON config, runs the matching solvers and
//! diagnostics, and writes `{subcommand}-{hash12}.json` (checks and results),
//! an optional `.csv` table and a `.manifest.json` with run metadata. Exit
//! status: 0 all checks pass, 1 some check failed, 2 config or IO error,
//! 3 numerical abort.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Args, Parser};
use mflab::chaos::ChaosError;
use mflab::kolmogorov::KolmogorovError;
use mflab::meanfield::{LedgerError, MeanFieldError};
use mflab::particles::ParticleError;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl From<MeanFieldError> for RunError {
    fn from(e: MeanFieldError) -> Self {
        match e {
            MeanFieldError::InvalidArgument(_) | MeanFieldError::UnsupportedKernel(_) => RunError::Config(e.to_string()),
            MeanFieldError::Cfl { .. }
            | MeanFieldError::Envelope(_)
            | MeanFieldError::MassDrift { .. }
            | MeanFieldError::NonFinite { .. } => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<ParticleError> for RunError {
    fn from(e: ParticleError) -> Self {
        match e {
            ParticleError::NonFinite { .. } => RunError::Numerical(e.to_string()),
            ParticleError::InvalidArgument(_) | ParticleError::NotProductForm { .. } => RunError::Config(e.to_string()),
        }
    }
}

impl From<KolmogorovError> for RunError {
    fn from(e: KolmogorovError) -> Self {
        match e {
            KolmogorovError::Cfl { .. } => RunError::Numerical(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<ChaosError> for RunError {
    fn from(e: ChaosError) -> Self {
        match e {
            ChaosError::MeanField(inner) => inner.into(),
            ChaosError::Particles(inner) => inner.into(),
            ChaosError::Kolmogorov(inner) => inner.into(),
            ChaosError::BelowFloor { .. } | ChaosError::TooManyRejections { .. } => RunError::Numerical(e.to_string()),
            ChaosError::InvalidArgument(_)
            | ChaosError::UnsupportedKernel(_)
            | ChaosError::Budget { .. }
            | ChaosError::BinsMisaligned => RunError::Config(e.to_string()),
        }
    }
}

impl From<LedgerError> for RunError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Internal(_) => RunError::Numerical(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mflab", version, about = "Run weighted particle / mean-field experiments from a JSON config")]
struct Cli {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUBCOMMANDS))]
    subcommand: String,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Config file (alternative to --config).
    pub path: Option<PathBuf>,
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `grids.G_x=64`; repeatable.
    #[arg(long = "set", value_name = "K=V")]
    pub set: Vec<String>,
    /// Worker-thread cap for the whole run.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "store-every")]
    pub store_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const SUBCOMMANDS: [&str; 6] =
    ["simulate-particles", "solve-meanfield", "solve-kolmogorov", "chaos-study", "verify-bounds", "verify-cancellation"];

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let raw = match Cli::try_parse_from(args) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&raw.subcommand, &raw.flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mflab: {e}");
            e.exit_code()
        }
    }
}

/// Runs one subcommand; returns 0 or 1 when a report was written.
pub fn run(subcommand: &str, flags: &Flags) -> Result<i32, RunError> {
    let started = Instant::now();
    if !SUBCOMMANDS.contains(&subcommand) {
        return Err(RunError::Config(format!("unknown subcommand `{subcommand}`; expected one of {SUBCOMMANDS:?}")));
    }
    let path = match (&flags.path, &flags.config) {
        (Some(_), Some(_)) => return Err(RunError::Config("give the config either positionally or with --config".into())),
        (Some(p), None) | (None, Some(p)) => p.clone(),
        (None, None) => return Err(RunError::Config("no config file given".into())),
    };
    let mut overrides = flags.set.clone();
    if let Some(k) = flags.store_every {
        overrides.push(format!("times.store_every={k}"));
    }
    if let Some(s) = flags.seed {
        overrides.push(format!("seed={s}"));
    }
    let loaded = config::load(&path, &overrides)?;
    let out_dir = flags
        .out
        .clone()
        .or_else(|| loaded.config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = flags.threads.unwrap_or(0);
    if flags.threads == Some(0) {
        return Err(RunError::Config("--threads must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    let threads_used = pool.current_num_threads();
    let outcome = pool.install(|| commands::dispatch(subcommand, &loaded.config))?;
    let exit = if outcome.checks.iter().all(|c| c.passed) { 0 } else { 1 };
    output::emit(&out_dir, subcommand, &loaded, &outcome, exit, threads_used, started.elapsed().as_secs_f64())?;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("mflab: check failed: {}: {}", c.name, c.detail);
    }
    Ok(exit)
}
