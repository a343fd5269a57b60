//! Experiment runner: reads a flat config, runs one experiment, writes a JSON
//! report and a CSV table next to it.
//!
//! Exit status of `run`: 0 when every declared tolerance passes, 1 when any
//! fails, 2 for configuration errors, 3 for runtime errors (including budget
//! caps). Nothing is written unless the run completes.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use error::CliError;

use config::{output_prefix, Params, RawConfig};
use experiments::{lookup, EXPERIMENTS};
use report::{csv_bytes, write_atomically, Report};

pub const THREADS_ENV: &str = "LIMITLAB_THREADS";
pub const SEED_ENV: &str = "LIMITLAB_SEED";

#[derive(Debug)]
pub struct RunResult {
    pub report: Report,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            1
        }
    }
}

/// Seed override from the environment, if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV} = `{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Sizes the global worker pool from the environment. Call once, early.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} = `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot size worker pool: {e}")))
}

/// Runs the experiment described by `config_path` and writes its outputs.
pub fn run(config_path: &Path, seed_override: Option<u64>) -> Result<RunResult, CliError> {
    let raw = RawConfig::load(config_path)?;
    let id = raw.experiment()?;
    let exp = lookup(id).ok_or_else(|| CliError::Config(format!("unknown experiment `{id}`; see list-experiments")))?;
    let mut params = Params::resolve(&raw, exp.defaults)?;
    if let Some(seed) = seed_override {
        if exp.is_simulation() {
            params.set("seed", seed.to_string());
        }
    }
    let time_cap = match raw.entries.get("time_cap_seconds") {
        Some(v) => Some(
            v.parse::<f64>()
                .ok()
                .filter(|c| *c > 0.0)
                .ok_or_else(|| CliError::Config(format!("time_cap_seconds = `{v}` is not a positive number")))?,
        ),
        None => None,
    };
    let prefix = output_prefix(&raw, config_path);

    let start = Instant::now();
    let outcome = exp.run(&params)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(cap) = time_cap {
        if elapsed > cap {
            return Err(CliError::Budget(format!("run took {elapsed:.1} s, cap is {cap} s")));
        }
    }

    let pass = outcome.checks.iter().all(|c| c.pass);
    let report = Report {
        experiment: exp.id.to_string(),
        summary: exp.summary.to_string(),
        config: params.values().clone(),
        predictions: outcome.predictions,
        rows: outcome.rows,
        checks: outcome.checks,
        notes: outcome.notes,
        pass,
        wall_clock_seconds: elapsed,
        finished_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let json_path = with_suffix(&prefix, "json");
    let csv_path = with_suffix(&prefix, "csv");
    write_atomically(&[
        (json_path.clone(), report.to_json().into_bytes()),
        (csv_path.clone(), csv_bytes(&report.rows)),
    ])?;
    Ok(RunResult { report, json_path, csv_path })
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn list_experiments() -> String {
    let width = EXPERIMENTS.iter().map(|e| e.id.len()).max().unwrap_or(0);
    let mut s = String::new();
    for e in EXPERIMENTS {
        let _ = writeln!(s, "{:width$}  {}", e.id, e.summary);
    }
    s
}

pub fn describe(id: &str) -> Result<String, CliError> {
    let e = lookup(id).ok_or_else(|| CliError::Config(format!("unknown experiment `{id}`")))?;
    let mut s = String::new();
    let _ = writeln!(s, "{}: {}", e.id, e.summary);
    let _ = writeln!(s, "claim: {}", e.claim);
    let _ = writeln!(s, "defaults:");
    for (k, v, doc) in e.defaults {
        let _ = writeln!(s, "  {k} = {v}    # {doc}");
    }
    if e.is_simulation() {
        let _ = writeln!(s, "{SEED_ENV} overrides seed; {THREADS_ENV} sets the worker count.");
    }
    Ok(s)
}

/// The CSV table of a saved report.
pub fn plotdata(report_path: &Path) -> Result<Vec<u8>, CliError> {
    Ok(csv_bytes(&Report::load(report_path)?.rows))
}
