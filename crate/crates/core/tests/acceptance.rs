//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs at n = 1, m = 8, seed 7 unless a criterion fixes otherwise.

use std::time::Instant;

use maxdual_core::duallab::{duality_experiment, DualityOptions, VERDICT_HYPOTHESIS_FAILS};
use maxdual_core::maximal::CandidateFamily;
use maxdual_core::presets::SpacePreset;
use maxdual_core::report::ProbeReport;
use maxdual_core::suite::{self, SuiteConfig};
use maxdual_core::Result;

const SEED: u64 = 7;

fn cfg(n: usize, m: u32) -> SuiteConfig {
    SuiteConfig { n, m, seed: SEED, scale: 1.0 }
}

fn all_pass(reports: &[ProbeReport]) -> (bool, String) {
    let fails: Vec<String> = reports.iter().flat_map(|r| r.failures()).collect();
    let trials: u64 = reports.iter().flat_map(|r| r.checks.iter().filter(|c| c.hard)).map(|c| c.trials).sum();
    if fails.is_empty() {
        (true, format!("{trials} hard trials, no violations"))
    } else {
        (false, format!("failing: {}", fails.join(", ")))
    }
}

fn luxemburg() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::luxemburg_calibration(&cfg(1, 8), 100)?]))
}

fn modular() -> Result<(bool, String)> {
    let r = suite::modular_chains(&cfg(1, 8), 1000)?;
    let (ok, msg) = all_pass(std::slice::from_ref(&r));
    let (a, b) = (r.metrics["branch_above_one"], r.metrics["branch_at_most_one"]);
    Ok((ok && a >= 100.0 && b >= 100.0, format!("{msg}; branches {a} / {b}")))
}

fn covering() -> Result<(bool, String)> {
    let reps = vec![
        suite::covering(1, 10_000, SEED)?,
        suite::covering(2, 10_000, SEED)?,
        suite::grid_axioms(1, 6)?,
        suite::grid_axioms(2, 6)?,
    ];
    Ok(all_pass(&reps))
}

fn comparison() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::pointwise_comparison(&cfg(1, 8), 1000)?, suite::pointwise_comparison(&cfg(2, 5), 100)?]))
}

fn cz() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::cz_decay(&cfg(1, 8), 1000)?]))
}

fn sparse() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::sparse_domination(&cfg(1, 8), 1000)?]))
}

fn adjoint() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::adjoint_duality(&cfg(1, 8), 1000)?]))
}

fn weights() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::weights_suite(&cfg(1, 8), 10_000)?]))
}

fn rdf() -> Result<(bool, String)> {
    Ok(all_pass(&[suite::rubio_de_francia_suite(&cfg(1, 8), 100)?]))
}

fn density() -> Result<(bool, String)> {
    let r = suite::density_calibration(&cfg(1, 8))?;
    let (ok, _) = all_pass(std::slice::from_ref(&r));
    let worst = r.check("slope").map_or(f64::NAN, |c| c.worst_ratio);
    Ok((ok, format!("worst |delta_hat - 1/q| = {worst:.3e}")))
}

fn truncation() -> Result<(bool, String)> {
    let reps = suite::truncation_suite(&cfg(1, 8), 100, 1000, "loghold")?;
    let (ok, msg) = all_pass(&reps);
    let main = &reps[1];
    let what_if = &reps[2];
    let exercised = what_if.metrics["nonzero_tq"];
    Ok((
        ok && exercised > 0.0,
        format!(
            "{msg}; pipeline k = {:.3}, t_Q > 0 on {} cubes; reduced k t_Q > 0 on {exercised} cubes",
            main.metrics["k"], main.metrics["nonzero_tq"]
        ),
    ))
}

fn end_to_end() -> Result<(bool, String)> {
    let res = [6, 8, 10, 12];
    let cands = CandidateFamily { seed: SEED, ..Default::default() };
    let opts = DualityOptions { seed: SEED, ..Default::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["calibration", "loghold"] {
        let r = duality_experiment(&SpacePreset::named(name)?, 1, &res, &cands, &opts)?;
        let stable = r.labels["x_trend"] == "stable" && r.labels["dual_trend"] == "stable";
        // no consecutive step may grow either
        let steps_ok = res.windows(2).all(|w| {
            let x = r.metrics[&format!("x_norm(m={})", w[1])] / r.metrics[&format!("x_norm(m={})", w[0])];
            let d = r.metrics[&format!("dual_norm(m={})", w[1])] / r.metrics[&format!("dual_norm(m={})", w[0])];
            x <= opts.stability && d <= opts.stability
        });
        ok &= stable && steps_ok;
        parts.push(format!(
            "{name}: X step {:.3}, X' step {:.3}",
            r.metrics["x_step_ratio"], r.metrics["dual_step_ratio"]
        ));
    }
    let r = duality_experiment(&SpacePreset::named("adversarial")?, 1, &res, &cands, &opts)?;
    let growth = r.metrics["x_total_growth"];
    ok &= growth >= 2.0 && r.labels["verdict"] == VERDICT_HYPOTHESIS_FAILS;
    parts.push(format!("adversarial: X growth {growth:.2}, verdict {:?}", r.labels["verdict"]));
    Ok((ok, format!("trend check only; {}", parts.join("; "))))
}

fn determinism() -> Result<(bool, String)> {
    let c = cfg(1, 8);
    let a = suite::run_selftest(&c)?;
    let b = suite::run_selftest(&c)?;
    let ja: Vec<String> = a.iter().map(|r| r.canonical_json()).collect();
    let jb: Vec<String> = b.iter().map(|r| r.canonical_json()).collect();
    let same = ja == jb;
    let (passed, _) = all_pass(&a);
    Ok((same && passed, format!("{} reports, identical = {same}, selftest passed = {passed}", a.len())))
}

fn main() {
    type Criterion = (&'static str, fn() -> Result<(bool, String)>);
    let criteria: [Criterion; 13] = [
        ("luxemburg calibration", luxemburg),
        ("modular-norm chains", modular),
        ("covering and grid axioms", covering),
        ("pointwise grid comparison", comparison),
        ("stopping-time decay", cz),
        ("sparse domination", sparse),
        ("adjoint duality", adjoint),
        ("weights suite", weights),
        ("rubio de francia", rdf),
        ("density slope calibration", density),
        ("truncation bound", truncation),
        ("end-to-end duality trends", end_to_end),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (ok, msg) = match run() {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} criterion {:>2} ({name}): {msg} [{:.1?}]", if ok { "PASS" } else { "FAIL" }, i + 1, t0.elapsed());
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1?}",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
