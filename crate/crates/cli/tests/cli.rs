use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn maxdual(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxdual"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("MAXDUAL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn reports(path: &Path) -> Vec<Value> {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamps(mut v: Vec<Value>) -> Vec<Value> {
    for r in v.iter_mut() {
        r.as_object_mut().unwrap().remove("timestamp");
    }
    v
}

#[test]
fn norm_of_step_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = maxdual(&["norm", "--function", "step:2,0,0.25", "--exponent", "const:2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("1.0"));
    for f in ["norm.json", "norm_checks.csv", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let r = reports(&dir.path().join("norm.json"));
    assert!(r[0]["timestamp"].is_string());
    assert!((r[0]["metrics"]["luxemburg_norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn selftest_passes_at_default_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let o = maxdual(&["selftest", "--dim", "1", "--m", "8", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("all hard checks passed"));
}

#[test]
fn duality_calibration_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let o = maxdual(&["duality", "--preset", "calibration"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("verdict: consistent"));
    let csv = std::fs::read_to_string(dir.path().join("duality_duality.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = maxdual(&["lemmas", "--preset", "loghold", "--m", "6", "--seed", "11"], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let ra = without_timestamps(reports(&a.path().join("lemmas.json")));
    let rb = without_timestamps(reports(&b.path().join("lemmas.json")));
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join("lemmas_checks.csv")).unwrap(),
        std::fs::read(b.path().join("lemmas_checks.csv")).unwrap()
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seed = 5\nm = 4\nfunction = \"random:2\"\n[maximal]\nkind = \"grid:1\"\n").unwrap();
    let o = maxdual(&["maximal", "--config", cfg.to_str().unwrap(), "--m", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = reports(&dir.path().join("maximal.json"));
    assert_eq!(r[0]["provenance"]["m"], 5);
    assert_eq!(r[0]["provenance"]["seed"], 5);
    assert_eq!(r[0]["labels"]["kind"], "grid:1");
    assert!(dir.path().join("maximal_function.json").exists());
}

#[test]
fn failing_assertion_exits_one_with_id() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.toml");
    std::fs::write(&cfg, "preset = \"adversarial\"\nm = 8\n[constants]\nk = 1.25\n").unwrap();
    let o = maxdual(&["lemmas", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncation_bound/impcond"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    assert_eq!(maxdual(&["norm", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(maxdual(&["norm", "--preset", "nope"], dir.path()).status.code(), Some(2));
    assert_eq!(maxdual(&["norm", "--dim", "2", "--m", "7"], dir.path()).status.code(), Some(2));
    assert_eq!(maxdual(&["norm", "--function", "step:1"], dir.path()).status.code(), Some(2));
    assert_eq!(maxdual(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn other_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["sparse", "apconst", "rdf"] {
        let o = maxdual(&[cmd, "--m", "6", "--function", "random:4", "--preset", "loghold"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("{cmd}.json")).exists());
    }
    assert!(dir.path().join("sparse_family.json").exists());
}
