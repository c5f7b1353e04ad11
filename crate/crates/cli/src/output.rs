//! Report, table and manifest files.

use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Loaded;
use crate::RunError;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    /// Name of the checked invariant.
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// What a subcommand produces before anything touches the disk.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub result: Value,
    pub csv: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    checks: &'a [Check],
    result: &'a Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    versions: Versions,
    wall_time_s: f64,
    threads: usize,
    exit_code: i32,
    failed_checks: Vec<&'a str>,
    artifacts: Vec<String>,
    config: Value,
}

#[derive(Serialize)]
struct Versions {
    mflab: &'static str,
    #[serde(rename = "mflab-cli")]
    mflab_cli: &'static str,
}

pub fn file_stem(subcommand: &str, loaded: &Loaded) -> String {
    format!("{subcommand}-{}", loaded.hash12())
}

pub fn report_path(dir: &Path, subcommand: &str, loaded: &Loaded) -> PathBuf {
    dir.join(format!("{}.json", file_stem(subcommand, loaded)))
}

/// Pretty JSON with a trailing newline. Reports carry no timing or thread
/// information, so equal inputs give equal bytes.
pub fn render_report(subcommand: &str, loaded: &Loaded, outcome: &Outcome) -> Result<String, RunError> {
    let r = Report {
        subcommand,
        config_hash: &loaded.hash,
        seed: loaded.config.seed,
        checks: &outcome.checks,
        result: &outcome.result,
    };
    let mut s = serde_json::to_string_pretty(&r).map_err(|e| RunError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn emit(
    dir: &Path,
    subcommand: &str,
    loaded: &Loaded,
    outcome: &Outcome,
    exit_code: i32,
    threads: usize,
    wall_time_s: f64,
) -> Result<(), RunError> {
    let io = |p: &Path, e: std::io::Error| RunError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let stem = file_stem(subcommand, loaded);
    let mut artifacts = Vec::new();

    let report = report_path(dir, subcommand, loaded);
    fs::write(&report, render_report(subcommand, loaded, outcome)?).map_err(|e| io(&report, e))?;
    artifacts.push(format!("{stem}.json"));
    if let Some(csv) = &outcome.csv {
        let p = dir.join(format!("{stem}.csv"));
        fs::write(&p, csv).map_err(|e| io(&p, e))?;
        artifacts.push(format!("{stem}.csv"));
    }

    let manifest = Manifest {
        subcommand,
        config_hash: &loaded.hash,
        seed: loaded.config.seed,
        versions: Versions { mflab: mflab::VERSION, mflab_cli: env!("CARGO_PKG_VERSION") },
        wall_time_s,
        threads,
        exit_code,
        failed_checks: outcome.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect(),
        artifacts,
        config: serde_json::from_str(&loaded.canonical).map_err(|e| RunError::Io(e.to_string()))?,
    };
    let p = dir.join(format!("{stem}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&p, text).map_err(|e| io(&p, e))
}
