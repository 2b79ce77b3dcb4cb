//! One function per subcommand. Each returns its reports, headline lines
//! for stdout and the summary, and any extra files to write.

use anyhow::{bail, Context};
use maxdual_core::czsparse::{cz_decompose, sparse_from_maximal, CzVariant};
use maxdual_core::duallab::{
    disjoint_family_rh_probe, duality_experiment, key_rh_bound_check, probe_depth, random_disjoint_families,
    reduced_k_truncation_check, scale_window_rh_check, truncation_bound_check, LemmaConstants, SpaceSpec,
};
use maxdual_core::lattice::{Cube, Lattice, ShiftedGrid};
use maxdual_core::maximal::{check_grid_comparison, maximal, CandidateFamily, MaximalKind};
use maxdual_core::report::{family_hash, ProbeReport, Tally};
use maxdual_core::suite::{run_selftest, SuiteConfig};
use maxdual_core::varlp::{check_modular_norm_bounds, dual_weighted_norm, luxemburg_norm, modular, weighted_norm};
use maxdual_core::weights::{
    a1_ratio, ainfty_absolute_continuity_check, ap_constant, apvar_constant, converse_check, reverse_holder_probe,
    rubio_de_francia, CubeFamily, CubeFamilySpec,
};
use serde_json::json;

use crate::config::ExperimentConfig;

#[derive(Default)]
pub struct Outcome {
    pub reports: Vec<ProbeReport>,
    pub headline: Vec<String>,
    pub extra_files: Vec<(String, String)>,
}

/// Shortest decimal that round-trips at 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{:.*e}", 11, v);
    let parsed: f64 = s.parse().unwrap_or(v);
    let mut out = format!("{parsed}");
    if !out.contains('.') && !out.contains('e') {
        out.push_str(".0");
    }
    out
}

pub fn parse_kind(s: &str, lat: Lattice) -> anyhow::Result<MaximalKind> {
    let n = lat.n;
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    match name.trim() {
        "full" => Ok(MaximalKind::Full),
        "local" => Ok(MaximalKind::LocalDyadic(Cube::new(n, [0.0, 0.0], 1.0))),
        "grid" => {
            let mut shift = [0u8; 2];
            let parts: Vec<&str> = rest.split(',').filter(|p| !p.trim().is_empty()).collect();
            if parts.len() > n {
                bail!("grid kind {s:?}: at most {n} shifts");
            }
            for (a, p) in parts.iter().enumerate() {
                shift[a] = p.trim().parse().with_context(|| format!("grid shift in {s:?}"))?;
            }
            if parts.len() == 1 && n == 2 {
                shift[1] = shift[0];
            }
            Ok(MaximalKind::Grid(ShiftedGrid::new(n, shift)?))
        }
        _ => bail!("unknown maximal kind {s:?} (full, grid:<shift>, local)"),
    }
}

fn stamp(rep: &mut ProbeReport, cfg: &ExperimentConfig) {
    let pv = &mut rep.provenance;
    pv.seed.get_or_insert(cfg.seed);
    pv.n.get_or_insert(cfg.n);
    pv.m.get_or_insert(cfg.m);
    pv.presets.entry("space".into()).or_insert_with(|| cfg.space.name.clone());
    pv.presets.entry("exponent".into()).or_insert_with(|| cfg.space.exponent.to_string());
    pv.presets.entry("weight".into()).or_insert_with(|| cfg.space.weight.to_string());
}

fn space(cfg: &ExperimentConfig) -> anyhow::Result<SpaceSpec> {
    Ok(SpaceSpec::from_preset(&cfg.space, cfg.lattice)?)
}

fn unit_weight_family(cfg: &ExperimentConfig) -> anyhow::Result<CubeFamily> {
    let depth = cfg.m.min(if cfg.n == 1 { 6 } else { 4 });
    Ok(CubeFamily::build(CubeFamilySpec::AllLatticeAligned { m: depth }, cfg.n)?)
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let mut out = match cfg.command.as_str() {
        "norm" => norm(cfg)?,
        "maximal" => maximal_cmd(cfg)?,
        "sparse" => sparse(cfg)?,
        "apconst" => apconst(cfg)?,
        "rdf" => rdf(cfg)?,
        "lemmas" => lemmas(cfg)?,
        "duality" => duality(cfg)?,
        "selftest" => selftest(cfg)?,
        other => bail!("unknown command {other:?}"),
    };
    for r in out.reports.iter_mut() {
        stamp(r, cfg);
        r.provenance.presets.entry("function".into()).or_insert_with(|| cfg.function.to_string());
    }
    Ok(out)
}

fn norm(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sp = space(cfg)?;
    let f = cfg.function.build(cfg.lattice)?;
    let lux = luxemburg_norm(&f, &sp.p)?;
    let wn = weighted_norm(&f, &sp.p, &sp.w)?;
    let dn = dual_weighted_norm(&f, &sp.p, &sp.w)?;
    let mut rep = ProbeReport::new("norm");
    rep.metric("luxemburg_norm", lux)
        .metric("weighted_norm", wn)
        .metric("dual_weighted_norm", dn)
        .metric("modular", modular(&f, &sp.p, None)?)
        .metric("p_minus", sp.p.p_minus())
        .metric("p_plus", sp.p.p_plus());
    let wf = f.zip_map(sp.w.field(), |a, b| a * b)?;
    let chain = check_modular_norm_bounds(&wf, &sp.p, None)?;
    rep.checks.extend(chain.checks.iter().cloned());
    for (k, v) in &chain.labels {
        rep.label(k, v.clone());
    }
    Ok(Outcome {
        reports: vec![rep],
        headline: vec![
            fmt_num(lux),
            format!("weighted_norm = {}", fmt_num(wn)),
            format!("dual_weighted_norm = {}", fmt_num(dn)),
        ],
        ..Default::default()
    })
}

fn maximal_cmd(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let lat = cfg.lattice;
    let kind = parse_kind(&cfg.file.maximal.kind, lat)?;
    let f = cfg.function.build(lat)?;
    let mf = maximal(&f, &kind)?;
    let sp = space(cfg)?;
    let mut rep = ProbeReport::new("maximal");
    rep.label("kind", cfg.file.maximal.kind.clone());
    let cols: &[&str] = if lat.n == 1 { &["cell", "x", "f", "mf"] } else { &["cell", "x", "y", "f", "mf"] };
    rep.columns(cols);
    for i in 0..lat.len() {
        let x = lat.center(i);
        let mut row = vec![json!(i), json!(x[0])];
        if lat.n == 2 {
            row.push(json!(x[1]));
        }
        row.push(json!(f.values()[i]));
        row.push(json!(mf.values()[i]));
        rep.row(row);
    }
    // shifted-grid cubes are not unions of cells, so only the other kinds dominate |f|
    if !matches!(kind, MaximalKind::Grid(g) if !g.is_standard()) {
        let mut ge = Tally::hard("dominates_abs_f");
        let ok = mf.values().iter().zip(f.values()).all(|(m, v)| *m >= v.abs() * (1.0 - 1e-12));
        ge.record(if ok { 0.0 } else { 1.0 }, ok);
        rep.push_check(&ge);
    }
    let nf = weighted_norm(&f, &sp.p, &sp.w)?;
    let nm = weighted_norm(&mf, &sp.p, &sp.w)?;
    rep.metric("sup_mf", mf.max()).metric("norm_f", nf).metric("norm_mf", nm);
    if nf > 0.0 {
        rep.metric("norm_ratio", nm / nf);
    }
    let mut reports = vec![rep];
    if matches!(kind, MaximalKind::Full) {
        reports.push(check_grid_comparison(&f)?);
    }
    Ok(Outcome {
        reports,
        headline: vec![format!("sup Mf = {}", fmt_num(mf.max())), format!("||Mf|| / ||f|| = {}", fmt_num(nm / nf))],
        extra_files: vec![("maximal_function.json".into(), mf.to_json()? + "\n")],
    })
}

fn sparse(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let lat = cfg.lattice;
    let sec = &cfg.file.sparse;
    let mut shift = [0u8; 2];
    for (a, s) in sec.grid.iter().take(2).enumerate() {
        shift[a] = *s;
    }
    let grid = ShiftedGrid::new(cfg.n, shift)?;
    let gamma = sec.gamma.unwrap_or(2f64.powi(cfg.n as i32 + 1));
    let f = cfg.function.build(lat)?;
    let cz = cz_decompose(&f, grid, gamma, CzVariant::Global)?;
    let mut czr = ProbeReport::new("cz_decomposition");
    czr.metric("gamma", gamma).metric("levels", cz.levels.len() as f64);
    czr.metric("cubes", cz.levels.iter().map(|l| l.cubes.len()).sum::<usize>() as f64);
    czr.push_check(&cz.check_decay(6)).push_check(&cz.check_selection());
    let (fam, mut sr) = sparse_from_maximal(&f, grid, sec.eta)?;
    sr.columns(&["level", "lo", "hi", "volume", "e_volume"]);
    for e in &fam.entries {
        sr.row(vec![
            json!(e.level),
            json!(e.cube.lo[..e.cube.n].to_vec()),
            json!(e.cube.hi[..e.cube.n].to_vec()),
            json!(e.volume()),
            json!(e.e_volume),
        ]);
    }
    sr.provenance.family_hash = Some(fam.family_hash());
    let count = fam.entries.len();
    Ok(Outcome {
        reports: vec![czr, sr],
        headline: vec![format!("sparse family: {count} cubes, eta = {}", sec.eta)],
        extra_files: vec![("sparse_family.json".into(), serde_json::to_string_pretty(&fam)? + "\n")],
    })
}

fn apconst(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sp = space(cfg)?;
    let sec = &cfg.file.apconst;
    let fam = unit_weight_family(cfg)?;
    let v = sp.w.field();
    let ap = ap_constant(v, sec.p, &fam)?;
    let apv = apvar_constant(&sp.p, &sp.w, &fam)?;
    let mut rep = ProbeReport::new("ap_constants");
    rep.metric(&format!("ap_constant(p={})", sec.p), ap.value)
        .metric("apvar_constant", apv.value)
        .label("ap_argmax", format!("{:?}", ap.argmax))
        .label("apvar_argmax", format!("{:?}", apv.argmax))
        .note("suprema over a finite cube family: lower bounds");
    rep.provenance.family_hash = Some(fam.hash());
    let mut rh = reverse_holder_probe(v, &fam, &sec.r_grid)?;
    rh.provenance.family_hash = Some(fam.hash());
    let ai = ainfty_absolute_continuity_check(v, &fam, sec.samples, cfg.seed)?;
    let conv = converse_check(v, sec.p, &fam, sec.samples, cfg.seed)?;
    Ok(Outcome {
        headline: vec![format!("A_{} = {}", sec.p, fmt_num(ap.value)), format!("A_p(.) = {}", fmt_num(apv.value))],
        reports: vec![rep, rh, ai, conv],
        ..Default::default()
    })
}

fn rdf(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sp = space(cfg)?;
    let sec = &cfg.file.rdf;
    let kind = parse_kind(&sec.kind, cfg.lattice)?;
    let g = cfg.function.build(cfg.lattice)?.abs();
    let r = rubio_de_francia(&g, &kind, sec.a, sec.terms)?;
    let mut rep = ProbeReport::new("rubio_de_francia");
    let mut ge = Tally::hard("majorant");
    let ok = r.rg.values().iter().zip(g.values()).all(|(x, y)| x >= y);
    ge.record(if ok { 0.0 } else { 1.0 }, ok);
    let tol = 2.0 * sec.a * r.tail_bound.unwrap_or(f64::INFINITY);
    let mr = maximal(&r.rg, &kind)?;
    let mut a1 = if r.divergent { Tally::soft("a1_bound") } else { Tally::hard("a1_bound") };
    for (mv, rv) in mr.values().iter().zip(r.rg.values()) {
        a1.leq(*mv, 2.0 * sec.a * rv + tol, 1e-12, 0.0);
    }
    let ng = weighted_norm(&g, &sp.p, &sp.w)?;
    let nr = weighted_norm(&r.rg, &sp.p, &sp.w)?;
    let certified = sp.p.is_constant()
        && sp.w.is_unit()
        && matches!(kind, MaximalKind::Grid(_))
        && sec.a >= sp.p.p_minus() / (sp.p.p_minus() - 1.0);
    let mut nd = if certified { Tally::hard("norm_doubling") } else { Tally::soft("norm_doubling") };
    nd.leq(nr, 2.0 * ng, 1e-12, 0.0);
    rep.push_check(&ge).push_check(&a1).push_check(&nd);
    rep.metric("norm_g", ng).metric("norm_rg", nr).metric("a", sec.a).metric("a1_ratio", a1_ratio(&r.rg, &kind)?);
    if let Some(x) = r.ratio {
        rep.metric("term_ratio", x);
    }
    if let Some(x) = r.tail_bound {
        rep.metric("tail_bound", x);
    }
    rep.label("divergent", r.divergent.to_string()).label("kind", sec.kind.clone());
    rep.label(
        "constants",
        if certified {
            "certified: A bounds the dyadic operator norm"
        } else {
            "A is a surrogate for the operator norm"
        },
    );
    rep.columns(&["term", "sup"]);
    for (k, s) in r.term_sup.iter().enumerate() {
        rep.row(vec![json!(k), json!(s)]);
    }
    Ok(Outcome {
        reports: vec![rep],
        headline: vec![format!("||Rg|| / ||g|| = {}", fmt_num(nr / ng))],
        ..Default::default()
    })
}

/// Resolution ratio above which the reverse-Hölder constant is flagged.
const RH_BLOWUP: f64 = 1.5;

fn lemmas(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sp = space(cfg)?;
    let tr = &cfg.file.trials;
    let mut ov = cfg.file.constants.clone();
    ov.trials.get_or_insert(tr.rh_trials);
    let (c, crep) = LemmaConstants::derive(&sp, &ov, cfg.seed)?;
    let r_grid = [1.1, 1.25, 1.5, 2.0, 3.0, 4.0];
    let mut rh = disjoint_family_rh_probe(&sp, &r_grid, tr.rh_trials, cfg.seed)?;
    let mut headline = vec![format!("r = {}, c = {}, k = {}, s = {}", c.r, fmt_num(c.c), fmt_num(c.k), fmt_num(c.s))];
    if cfg.m >= 2 {
        let coarse = SpaceSpec::from_preset(&cfg.space, Lattice::new(cfg.n, cfg.m - 2)?)?;
        let rc = disjoint_family_rh_probe(&coarse, &r_grid, tr.rh_trials, cfg.seed)?;
        let mut stable = Tally::soft("resolution_stable");
        let mut worst = 0.0f64;
        for r in r_grid {
            let key = format!("c_hat({r})");
            let ratio = rh.metrics[&key] / rc.metrics[&key];
            worst = worst.max(ratio);
            stable.record(ratio, ratio <= RH_BLOWUP);
            rh.metric(&format!("c_hat_coarse({r})"), rc.metrics[&key]);
        }
        rh.push_check(&stable).metric("coarse_m", (cfg.m - 2) as f64);
        if worst > RH_BLOWUP {
            rh.label("blow_up", format!("c_hat grows by {worst:.3} from m = {} to m = {}", cfg.m - 2, cfg.m));
            headline.push(format!("warning: reverse-Hölder constant grows by {worst:.3} over two resolutions"));
        } else {
            rh.label("blow_up", "none");
        }
    }
    let fams = random_disjoint_families(cfg.n, probe_depth(cfg.lattice), tr.families, cfg.seed);
    let trunc = truncation_bound_check(&sp, &c, &fams, tr.samples, cfg.seed)?;
    let what_if = reduced_k_truncation_check(&sp, &c, &fams, tr.samples, cfg.seed)?;
    let mut cubes: Vec<_> = fams.iter().flatten().copied().collect();
    cubes.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap().then(a.hi.partial_cmp(&b.hi).unwrap()));
    cubes.dedup();
    let window = scale_window_rh_check(&sp, &c, &cubes)?;
    let key = key_rh_bound_check(&sp, &c, &fams, tr.t_sweep)?;
    let mut reports = vec![crep, rh, trunc, what_if, window, key];
    let fh = family_hash(&fams);
    for r in reports.iter_mut().skip(2) {
        r.provenance.family_hash.get_or_insert_with(|| fh.clone());
    }
    Ok(Outcome { reports, headline, ..Default::default() })
}

fn duality(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sec = &cfg.file.duality;
    let cands = CandidateFamily { seed: cfg.seed, random: sec.random_candidates, structured: true };
    let rep = duality_experiment(&cfg.space, cfg.n, &sec.resolutions, &cands, &sec.options(cfg.seed))?;
    let verdict = rep.labels.get("verdict").cloned().unwrap_or_default();
    let mut headline = vec![format!("verdict: {verdict}")];
    for &m in &sec.resolutions {
        headline.push(format!(
            "m = {m}: ||M||_X >= {}, ||M||_X' >= {}",
            fmt_num(rep.metrics[&format!("x_norm(m={m})")]),
            fmt_num(rep.metrics[&format!("dual_norm(m={m})")])
        ));
    }
    Ok(Outcome { reports: vec![rep], headline, ..Default::default() })
}

fn selftest(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sc = SuiteConfig { n: cfg.n, m: cfg.m, seed: cfg.seed, scale: cfg.file.trials.scale };
    let reports = run_selftest(&sc)?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    Ok(Outcome {
        headline: vec![format!("{} suites, {} failed", reports.len(), failed)],
        reports,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(1.0), "1.0");
        assert_eq!(fmt_num(0.999_999_999_999_9), "1.0");
        assert_eq!(fmt_num(2.5), "2.5");
    }

    #[test]
    fn kinds_parse() {
        let lat = Lattice::new(2, 3).unwrap();
        assert_eq!(parse_kind("full", lat).unwrap(), MaximalKind::Full);
        assert!(matches!(parse_kind("grid:1", lat).unwrap(), MaximalKind::Grid(g) if g.shift3 == [1, 1]));
        assert!(parse_kind("grid:3", lat).is_err());
        assert!(parse_kind("bogus", lat).is_err());
    }
}
