//! Experiment reports (JSON) and their flat tables (CSV).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CSV_HEADER: [&str; 6] = ["series", "horizon", "observed", "predicted", "ratio", "stderr"];

/// One observed-versus-predicted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub series: String,
    pub horizon: usize,
    pub observed: f64,
    pub predicted: f64,
    /// Monte Carlo standard error of `observed`, when simulated.
    pub stderr: Option<f64>,
}

impl Row {
    pub fn ratio(&self) -> f64 {
        self.observed / self.predicted
    }
}

/// A declared tolerance and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 0.02`.
    pub bound: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, bound: format!("<= {limit}"), pass: value <= limit }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, bound: format!("in ({lo}, {hi})"), pass: value > lo && value < hi }
    }

    /// A yes/no property, recorded as 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), value: ok as u8 as f64, bound: "== 1".into(), pass: ok }
    }
}

/// Scaling and constant of a predicted limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub series: String,
    pub scaling: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub summary: String,
    /// Effective parameters, defaults included.
    pub config: BTreeMap<String, String>,
    pub predictions: Vec<Prediction>,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub pass: bool,
    pub wall_clock_seconds: f64,
    pub finished_unix_seconds: u64,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{} is not a report: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }
}

/// 17 significant digits, so values reload bit-for-bit.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// CSV table of the report rows; `ratio` is `observed / predicted`.
pub fn csv_bytes(rows: &[Row]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.series.clone(),
            r.horizon.to_string(),
            format_float(r.observed),
            format_float(r.predicted),
            format_float(r.ratio()),
            r.stderr.map(format_float).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes all files or none: each goes to a temporary sibling first and is
/// renamed into place only after every write succeeded.
pub fn write_atomically(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[PathBuf]| {
        for p in staged {
            let _ = fs::remove_file(p);
        }
    };
    for (path, bytes) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Err(e) = fs::create_dir_all(dir) {
                cleanup(&staged);
                return Err(CliError::io(dir, e));
            }
        }
        let tmp = temp_sibling(path);
        let result = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        });
        staged.push(tmp.clone());
        if let Err(e) = result {
            cleanup(&staged);
            return Err(CliError::io(&tmp, e));
        }
    }
    for ((path, _), tmp) in files.iter().zip(&staged) {
        if let Err(e) = fs::rename(tmp, path) {
            cleanup(&staged);
            return Err(CliError::io(path, e));
        }
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}
