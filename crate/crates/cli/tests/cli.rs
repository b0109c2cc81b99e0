use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bosecond"))
}

fn run(args: &[&str], out: &Path) -> Output {
    let o = bin().args(args).arg("--output").arg(out).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let o = bin().args(["scatter", "--config", "/definitely/not/here.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/definitely/not/here.json"));
}

#[test]
fn invalid_parameters_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["ed", "--n", "3", "--n-max", "4"], vec!["scatter", "--ell", "0.7"], vec!["energy", "--beta", "1.0"]] {
        let o = bin().args(&args).arg("--output").arg(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"kappa": 0.1, "unknown_field": 3}"#).unwrap();
    let o = bin().args(["energy", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"kappa": 0.02, "n": 500, "cutoff_sq": 4, "seed": 7}"#).unwrap();
    let out = dir.path().join("o");
    let o = bin().args(["born", "--config"]).arg(&cfg).arg("--output").arg(&out).output().unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("born.csv")).unwrap();
    assert!(text.contains("# seed 7"));
    assert!(text.contains("\"kappa\":0.02"));
    assert!(text.contains("\"n\":500"));
}

#[test]
fn zero_coupling_scatter() {
    let dir = tempfile::tempdir().unwrap();
    run(&["scatter", "--kappa", "0", "--cutoff-sq", "4"], dir.path());
    let v = read_json(&dir.path().join("scatter.json"));
    let r = &v["result"][0];
    assert_eq!(r["lambda"].as_f64().unwrap(), 0.0);
    for pair in r["eta_by_norm_sq"].as_array().unwrap() {
        assert_eq!(pair[1].as_f64().unwrap(), 0.0);
    }
    for row in csv_rows(&dir.path().join("scatter_residual.csv")) {
        assert_eq!(f(&row[5]), 0.0);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["scatter", "--cutoff-sq", "4"], a.path());
    run(&["scatter", "--cutoff-sq", "4", "--threads", "1"], b.path());
    for name in ["scatter.json", "scatter_residual.csv"] {
        let x = std::fs::read_to_string(a.path().join(name)).unwrap();
        let y = std::fs::read_to_string(b.path().join(name)).unwrap();
        // the output directory is part of the echoed config
        let strip = |s: &str| s.replace(a.path().to_str().unwrap(), "").replace(b.path().to_str().unwrap(), "");
        assert_eq!(strip(&x), strip(&y), "{name}");
    }
}

#[test]
fn zero_coupling_energy_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    run(&["energy", "--kappa", "0", "--cutoff-sq", "4"], dir.path());
    let v = read_json(&dir.path().join("energy.json"));
    let r = &v["result"][0]["report"];
    for key in ["c_n", "diag_shift", "e_direct", "e_asymptotic", "a_n"] {
        assert_eq!(r[key].as_f64().unwrap(), 0.0, "{key}");
    }
    run(&["spectrum", "--kappa", "0", "--cutoff-sq", "4"], dir.path());
    for row in csv_rows(&dir.path().join("spectrum.csv")) {
        assert_eq!(f(&row[5]), f(&row[4]));
    }
}

#[test]
fn born_warns_below_m_beta() {
    let dir = tempfile::tempdir().unwrap();
    run(&["born", "--beta", "0.7", "--k-max", "1", "--cutoff-sq", "4"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("born.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# warning:") && l.contains("m_beta = 3")));
}

#[test]
fn n_list_rows_match_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    run(&["energy", "--n-list", "1000,4000", "--cutoff-sq", "4"], dir.path());
    let list = read_json(&dir.path().join("energy.json"));
    let rows = list["result"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (i, n) in ["1000", "4000"].iter().enumerate() {
        let single = tempfile::tempdir().unwrap();
        run(&["energy", "--n", n, "--cutoff-sq", "4"], single.path());
        let s = read_json(&single.path().join("energy.json"));
        assert_eq!(s["result"][0]["report"], rows[i]["report"]);
    }
}

#[test]
fn zero_coupling_ed_has_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    run(&["ed", "--kappa", "0", "--n", "100"], dir.path());
    let rows = csv_rows(&dir.path().join("ed.csv"));
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(f(&row[4]).abs() <= 1e-9, "{row:?}");
    }
}

#[test]
fn expand_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    run(&["expand", "--depth", "3"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("expand_n3.txt")).unwrap();
    let terms: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(terms.len(), 48);
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/expand_n3.txt")).unwrap();
    assert_eq!(terms, golden.lines().collect::<Vec<_>>());
    let v = read_json(&dir.path().join("expand.json"));
    assert_eq!(v["result"]["ok"], Value::Bool(true));
    let o = bin().args(["expand", "--depth", "7"]).arg("--output").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn study_lambda_exponent() {
    let dir = tempfile::tempdir().unwrap();
    run(&["study", "--n-list", "1000,10000,100000"], dir.path());
    let v = read_json(&dir.path().join("study.json"));
    let fit = &v["result"]["lambda_deviation"]["fit"];
    let e = fit["exponent"].as_f64().unwrap();
    assert!((e + 0.5).abs() <= 0.15, "exponent {e}");
}
