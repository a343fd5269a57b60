//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Keys are
//! lower-case identifiers; values run to the end of the line (trimmed).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Keys every experiment accepts.
pub const COMMON_KEYS: &[&str] = &["experiment", "output", "time_cap_seconds"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                return Err(CliError::Config(format!("line {}: invalid key `{key}`", lineno + 1)));
            }
            if value.is_empty() {
                return Err(CliError::Config(format!("line {}: key `{key}` has no value", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn experiment(&self) -> Result<&str, CliError> {
        self.entries
            .get("experiment")
            .map(String::as_str)
            .ok_or_else(|| CliError::Config("missing required key `experiment`".into()))
    }
}

/// Output prefix: the `output` key resolved against the config's directory,
/// else the config path without its extension.
pub fn output_prefix(raw: &RawConfig, config_path: &Path) -> PathBuf {
    let dir = config_path.parent().unwrap_or_else(|| Path::new(""));
    match raw.entries.get("output") {
        Some(out) => dir.join(out),
        None => config_path.with_extension(""),
    }
}

/// Effective parameters of one run: declared defaults overlaid by the file.
#[derive(Debug, Clone)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// Rejects keys the experiment does not declare.
    pub fn resolve(raw: &RawConfig, defaults: &[(&str, &str, &str)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        for (k, v) in &raw.entries {
            if COMMON_KEYS.contains(&k.as_str()) {
                continue;
            }
            if !values.contains_key(k) {
                let known: Vec<&str> = defaults.iter().map(|d| d.0).collect();
                return Err(CliError::Config(format!("unknown key `{k}` (accepted: {})", known.join(", "))));
            }
            values.insert(k.clone(), v.clone());
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let raw = self.str(key)?;
        let v: f64 = raw.parse().map_err(|_| bad(key, raw, "a number"))?;
        if !v.is_finite() {
            return Err(bad(key, raw, "a finite number"));
        }
        Ok(v)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        let raw = self.str(key)?;
        parse_count(raw).ok_or_else(|| bad(key, raw, "a nonnegative integer"))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        Ok(self.u64(key)? as usize)
    }

    /// Comma-separated integers, e.g. `100, 1e3, 10000`.
    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let raw = self.str(key)?;
        raw.split(',')
            .map(|item| parse_count(item.trim()).map(|v| v as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(key, raw, "a comma-separated list of nonnegative integers"))
    }
}

fn bad(key: &str, raw: &str, want: &str) -> CliError {
    CliError::Config(format!("key `{key}`: `{raw}` is not {want}"))
}

/// Integer literal, also accepting exact scientific notation such as `1e5`.
fn parse_count(raw: &str) -> Option<u64> {
    if let Ok(v) = raw.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = raw.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < 1.8e19).then_some(v as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let raw = RawConfig::parse("# run\nexperiment = thy-gw  # inline\n\nseed=7\n").unwrap();
        assert_eq!(raw.experiment().unwrap(), "thy-gw");
        assert_eq!(raw.entries["seed"], "7");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(RawConfig::parse("experiment thy-gw").is_err());
        assert!(RawConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RawConfig::parse("Seed = 1").is_err());
        assert!(RawConfig::parse("seed =").is_err());
        assert!(RawConfig::parse("seed = 1").unwrap().experiment().is_err());
    }

    #[test]
    fn typed_lookups() {
        let raw = RawConfig::parse("experiment = x\nhorizons = 10, 1e3\nalpha = 2.5").unwrap();
        let p = Params::resolve(&raw, &[("horizons", "1", ""), ("alpha", "1", ""), ("seed", "3", "")]).unwrap();
        assert_eq!(p.usize_list("horizons").unwrap(), vec![10, 1000]);
        assert_eq!(p.f64("alpha").unwrap(), 2.5);
        assert_eq!(p.u64("seed").unwrap(), 3);
        assert!(p.u64("alpha").is_err());
        let raw = RawConfig::parse("experiment = x\nbogus = 1").unwrap();
        assert!(Params::resolve(&raw, &[("alpha", "1", "")]).is_err());
    }

    #[test]
    fn output_prefix_defaults_to_config_stem() {
        let raw = RawConfig::parse("experiment = x").unwrap();
        assert_eq!(output_prefix(&raw, Path::new("runs/a.cfg")), PathBuf::from("runs/a"));
        let raw = RawConfig::parse("experiment = x\noutput = out/b").unwrap();
        assert_eq!(output_prefix(&raw, Path::new("runs/a.cfg")), PathBuf::from("runs/out/b"));
    }
}
