use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_limitlab"));
    c.env_remove("LIMITLAB_SEED").env_remove("LIMITLAB_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(config: &Path) -> Output {
    bin().arg("run").arg(config).output().unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn records(csv_text: &[u8]) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(csv_text).records().map(|r| r.unwrap()).collect()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_GW: &str = "experiment = thy-gw\nhorizons = 200, 1000\nreplicates = 3000\nseed = 11\n";

#[test]
fn list_and_describe() {
    let out = bin().arg("list-experiments").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 15);
    for id in ["prpd-summable", "rzr-iv", "thbb-exp", "c4-gbm", "thz-bpve-ii"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing");
    }

    let out = bin().args(["describe", "thy-gw"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("replicates = 100000"));
    assert!(text.contains("LIMITLAB_SEED"));

    let out = bin().args(["describe", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rzr_i_matches_squared_zeta_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "z.cfg", "experiment = rzr-i\nm = 0\ns = 2\nk = 2\nhorizons = 10000\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = records(&fs::read(dir.path().join("z.csv")).unwrap());
    assert_eq!(rows.len(), 1);
    let ratio: f64 = rows[0][4].parse().unwrap();
    let predicted: f64 = rows[0][3].parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    // the constant is a certified series tail, accurate to about 1e-10
    let z2 = std::f64::consts::PI.powi(2) / 6.0;
    assert!((predicted / (z2 * z2) - 1.0).abs() < 1e-9);
}

#[test]
fn gw_defaults_meet_total_variation_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "gw.cfg", "experiment = thy-gw\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&dir.path().join("gw.json"));
    let tv = r["checks"].as_array().unwrap().iter().find(|c| c["name"].as_str().unwrap().starts_with("total variation")).unwrap();
    assert!(tv["value"].as_f64().unwrap() < 0.02);
    assert_eq!(r["config"]["replicates"], "100000");
    assert!(r["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn repeated_runs_give_identical_tables() {
    let dir = TempDir::new().unwrap();
    let a = write_config(dir.path(), "a.cfg", SMALL_GW);
    let b = write_config(dir.path(), "b.cfg", SMALL_GW);
    assert!(run(&a).status.code().unwrap() <= 1);
    let first = fs::read(dir.path().join("a.csv")).unwrap();
    assert!(run(&a).status.code().unwrap() <= 1);
    assert_eq!(first, fs::read(dir.path().join("a.csv")).unwrap());
    // Worker count must not change the numbers.
    let out = bin().arg("run").arg(&b).env("LIMITLAB_THREADS", "3").output().unwrap();
    assert!(out.status.code().unwrap() <= 1);
    assert_eq!(first, fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn seed_override_from_environment() {
    let dir = TempDir::new().unwrap();
    let base = write_config(dir.path(), "base.cfg", SMALL_GW);
    let env = write_config(dir.path(), "env.cfg", SMALL_GW);
    let direct = write_config(dir.path(), "direct.cfg", &SMALL_GW.replace("seed = 11", "seed = 99"));
    run(&base);
    run(&direct);
    let out = bin().arg("run").arg(&env).env("LIMITLAB_SEED", "99").output().unwrap();
    assert!(out.status.code().unwrap() <= 1);
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("env.csv"), read("direct.csv"));
    assert_ne!(read("env.csv"), read("base.csv"));
    assert_eq!(report(&dir.path().join("env.json"))["config"]["seed"], "99");

    let out = bin().arg("run").arg(&env).env("LIMITLAB_SEED", "x").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_configs_exit_2_without_output() {
    for body in [
        "experiment = rzr-i\nthis line has no equals sign\n",
        "experiment = rzr-i\nbogus = 1\n",
        "experiment = no-such-experiment\n",
        "m = 0\n",
        "experiment = rzr-i\nk = 0\n",
        "experiment = rzr-i\nhorizons = 10, ten\n",
        "experiment = rzr-i\nk = 2\nk = 3\n",
    ] {
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), "bad.cfg", body);
        let out = run(&cfg);
        assert_eq!(out.status.code(), Some(2), "{body:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(files_in(dir.path()), vec!["bad.cfg".to_string()], "{body:?}");
    }
    let dir = TempDir::new().unwrap();
    let out = run(&dir.path().join("missing.cfg"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_tolerance_exits_1_and_still_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "tight.cfg", "experiment = rzr-i\nhorizons = 100, 1000\ntol = 1e-9\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL relative error"));
    let r = report(&dir.path().join("tight.json"));
    assert_eq!(r["pass"], false);
    assert_eq!(r["config"]["tol"], "1e-9");
}

#[test]
fn time_cap_is_a_budget_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "slow.cfg", "experiment = rzr-iv\nhorizons = 3000\ntime_cap_seconds = 1e-9\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(files_in(dir.path()), vec!["slow.cfg".to_string()]);
}

#[test]
fn output_key_sets_the_prefix() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.cfg", "experiment = prpd-summable\nhorizons = 1000, 2000\noutput = out/summable\n");
    assert_eq!(run(&cfg).status.code(), Some(0));
    assert!(dir.path().join("out/summable.json").is_file());
    assert!(dir.path().join("out/summable.csv").is_file());
    assert_eq!(files_in(&dir.path().join("out")), vec!["summable.csv".to_string(), "summable.json".to_string()]);
}

#[test]
fn plotdata_reproduces_the_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "exp.cfg", "experiment = thbb-exp\nhorizons = 100, 1000, 5000\n");
    assert_eq!(run(&cfg).status.code(), Some(0));
    let table = fs::read(dir.path().join("exp.csv")).unwrap();

    let out = bin().arg("plotdata").arg(dir.path().join("exp.json")).output().unwrap();
    assert!(out.status.success());
    assert_eq!(out.stdout, table);

    let copy = dir.path().join("copy.csv");
    let out = bin().arg("plotdata").arg(dir.path().join("exp.json")).arg("-o").arg(&copy).output().unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&copy).unwrap(), table);

    let text = String::from_utf8(table.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "series,horizon,observed,predicted,ratio,stderr");
    let rows = records(&table);
    for r in &rows {
        let (obs, pred, ratio): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert_eq!(ratio, obs / pred);
        assert_eq!(&r[5], "");
    }
    // Second moment: ratios increase toward 1.
    let k2: Vec<f64> = rows.iter().filter(|r| r[0].contains("k=2")).map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(k2.len(), 3);
    assert!(k2.windows(2).all(|w| w[0] < w[1] && w[1] < 1.0), "{k2:?}");
    assert!((k2[2] - 1.0).abs() < 0.01);
}

#[test]
fn plotdata_of_empty_report_is_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "e.cfg", "experiment = prpd-summable\nhorizons = 2000\n");
    assert_eq!(run(&cfg).status.code(), Some(0));
    let mut r = report(&dir.path().join("e.json"));
    r["rows"] = serde_json::json!([]);
    let empty = dir.path().join("empty.json");
    fs::write(&empty, serde_json::to_string(&r).unwrap()).unwrap();
    let out = bin().arg("plotdata").arg(&empty).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "series,horizon,observed,predicted,ratio,stderr\n");

    let out = bin().arg("plotdata").arg(dir.path().join("absent.json")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("absent.json"));
}

#[test]
fn simulated_rows_carry_standard_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "gw.cfg", SMALL_GW);
    run(&cfg);
    let rows = records(&fs::read(dir.path().join("gw.csv")).unwrap());
    assert!(rows.iter().any(|r| !r[5].is_empty()));
    for r in rows.iter().filter(|r| !r[5].is_empty()) {
        assert!(r[5].parse::<f64>().unwrap() > 0.0);
    }
}
