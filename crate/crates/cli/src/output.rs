//! Report files: `<command>.json`, `<command>_checks.csv`, one CSV per
//! report table, and `summary.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use maxdual_core::report::ProbeReport;
use serde_json::Value;

use crate::config::ExperimentConfig;

pub fn timestamp() -> String {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("unix:{}", d.as_secs())
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn table_file(dir: &Path, command: &str, id: &str) -> PathBuf {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect();
    dir.join(format!("{command}_{safe}.csv"))
}

/// Writes every output file and returns the paths written.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    reports: &mut [ProbeReport],
    headline: &[String],
) -> anyhow::Result<Vec<PathBuf>> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stamp = timestamp();
    for r in reports.iter_mut() {
        r.timestamp = Some(stamp.clone());
    }
    let mut written = Vec::new();

    let json_path = dir.join(format!("{}.json", cfg.command));
    fs::write(&json_path, serde_json::to_string_pretty(&reports)? + "\n")?;
    written.push(json_path);

    let checks_path = dir.join(format!("{}_checks.csv", cfg.command));
    let mut w = csv::Writer::from_path(&checks_path)?;
    w.write_record(["report", "check", "hard", "passed", "trials", "violations", "worst_ratio"])?;
    for r in reports.iter() {
        for c in &r.checks {
            w.write_record([
                r.id.clone(),
                c.name.clone(),
                c.hard.to_string(),
                c.passed.to_string(),
                c.trials.to_string(),
                c.violations.to_string(),
                c.worst_ratio.to_string(),
            ])?;
        }
    }
    w.flush()?;
    written.push(checks_path);

    for r in reports.iter().filter(|r| !r.table.columns.is_empty()) {
        let path = table_file(dir, &cfg.command, &r.id);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&r.table.columns)?;
        for row in &r.table.rows {
            w.write_record(row.iter().map(cell))?;
        }
        w.flush()?;
        written.push(path);
    }

    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, summary(cfg, reports, headline))?;
    written.push(summary_path);
    Ok(written)
}

/// One page: configuration, headline numbers, then per-report checks.
pub fn summary(cfg: &ExperimentConfig, reports: &[ProbeReport], headline: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "maxdual {}", cfg.command);
    let _ = writeln!(
        s,
        "n = {}, m = {}, seed = {}, space = {} (p = {}, w = {})",
        cfg.n, cfg.m, cfg.seed, cfg.space.name, cfg.space.exponent, cfg.space.weight
    );
    for h in headline {
        let _ = writeln!(s, "{h}");
    }
    let _ = writeln!(s);
    for r in reports {
        let status = if r.passed() { "ok" } else { "FAILED" };
        let _ = writeln!(s, "[{status}] {}", r.id);
        for c in &r.checks {
            let kind = if c.hard { "hard" } else { "soft" };
            let mark = if c.passed { "pass" } else { "fail" };
            let _ = writeln!(
                s,
                "    {mark} {kind} {}: {} trials, {} violations, worst {:.6e}",
                c.name, c.trials, c.violations, c.worst_ratio
            );
        }
        for (k, v) in &r.labels {
            let _ = writeln!(s, "    {k}: {v}");
        }
        for note in &r.notes {
            let _ = writeln!(s, "    note: {note}");
        }
    }
    let failures: Vec<String> = reports.iter().flat_map(|r| r.failures()).collect();
    let _ = writeln!(s);
    if failures.is_empty() {
        let _ = writeln!(s, "all hard checks passed");
    } else {
        let _ = writeln!(s, "failing: {}", failures.join(", "));
    }
    s
}
