//! The invariant suite: each function runs one family of checks on seeded
//! random inputs and returns a report whose hard checks must all pass.
//! `selftest` runs them all with reduced trial counts.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::czsparse::{adjoint_sparse_operator, cz_decompose, sparse_from_maximal, sparse_operator, CzVariant};
use crate::duallab::{
    random_disjoint_families, reduced_k_truncation_check, sparse_density_probe, truncation_bound_check,
    ConstantOverrides, DensityFamily, LemmaConstants, SpaceSpec, DEFAULT_DENSITIES,
};
use crate::lattice::{build_shifted_grids, cover_cube, Cube, GridCube, Lattice, LatticeFunction, Rect, ShiftedGrid};
use crate::maximal::{check_grid_comparison, maximal, MaximalKind};
use crate::presets::SpacePreset;
use crate::report::{ProbeReport, Tally};
use crate::rng::{random_support_function, stream, StreamRng};
use crate::varlp::{luxemburg_norm, modular_norm_bounds, ExponentField, WeightField};
use crate::weights::{
    a1_ratio, ap_constant, converse_check, reverse_holder_probe, rubio_de_francia, CubeFamily, CubeFamilySpec,
};
use crate::Result;

/// Resolution, seed and a multiplier on the per-check trial counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub m: u32,
    pub seed: u64,
    pub scale: f64,
}

impl SuiteConfig {
    pub fn trials(&self, full: usize) -> usize {
        ((full as f64 * self.scale).ceil() as usize).max(1)
    }

    fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.n, self.m)
    }
}

/// A random exponent with values in about `[1.2, 6]` on the whole box.
pub fn random_exponent(lat: Lattice, rng: &mut StreamRng) -> Result<ExponentField> {
    let base: f64 = rng.gen_range(1.3..4.0);
    let amp: f64 = rng.gen_range(0.0..(base - 1.2).min(2.0));
    let freq: f64 = rng.gen_range(0.5..4.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let n = lat.n;
    ExponentField::from_fn(lat, |x| {
        let s: f64 = (0..n).map(|a| x[a]).sum();
        base + amp * (freq * s + phase).sin()
    })
}

fn finish(mut rep: ProbeReport, cfg: &SuiteConfig) -> ProbeReport {
    rep.provenance.seed = Some(cfg.seed);
    rep.provenance.n = Some(cfg.n);
    rep.provenance.m = Some(cfg.m);
    rep
}

/// Constant exponents: Luxemburg norm against the classical `L^q` norm.
pub fn luxemburg_calibration(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let mut rng = stream(cfg.seed, "suite_luxemburg");
    let mut t = Tally::hard("classical_match");
    for q in [1.5, 2.0, 3.0, 4.0] {
        let p = ExponentField::constant(lat, q)?;
        for _ in 0..trials {
            let f = random_support_function(lat, &mut rng);
            let classical = f.values().iter().map(|v| v.abs().powf(q)).sum::<f64>() * lat.cell_volume();
            let classical = classical.powf(1.0 / q);
            let lux = luxemburg_norm(&f, &p)?;
            let err = (lux - classical).abs() / lux;
            t.record(err, err <= 1e-8);
        }
    }
    let mut rep = ProbeReport::new("luxemburg_calibration");
    rep.push_check(&t);
    Ok(finish(rep, cfg))
}

/// Both modular-norm chains on random `(f, p)`, scaled to hit both branches.
pub fn modular_chains(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let mut rng = stream(cfg.seed, "suite_modular");
    let mut t = Tally::hard("chains");
    let mut local = Tally::hard("local_chains");
    let (mut above, mut below) = (0usize, 0usize);
    for i in 0..trials {
        let p = random_exponent(lat, &mut rng)?;
        let base = random_support_function(lat, &mut rng);
        let nrm = luxemburg_norm(&base, &p)?;
        // alternate the target branch, then a random factor within it
        let target = if i % 2 == 0 { rng.gen_range(1.05..100.0) } else { rng.gen_range(0.01..0.95) };
        let f = base.scale(target / nrm)?;
        let b = modular_norm_bounds(&f, &p, None)?;
        if b.above_one {
            above += 1;
        } else {
            below += 1;
        }
        t.record((b.lower / b.norm).max(b.norm / b.upper), b.holds(1e-9));
        // the same chain on a dyadic subcube with the local exponent bounds
        let level = rng.gen_range(1..=cfg.m.min(4));
        let side = (-(level as f64)).exp2();
        let mut lo = [0.0; 2];
        for c in lo.iter_mut().take(lat.n) {
            *c = rng.gen_range(0..1u32 << level) as f64 * side;
        }
        let region = Rect::new(lat.n, lo, [lo[0] + side, lo[1] + side]);
        let bl = modular_norm_bounds(&f, &p, Some(&region))?;
        if bl.norm > 0.0 {
            local.record((bl.lower / bl.norm).max(bl.norm / bl.upper), bl.holds(1e-9));
        }
    }
    let mut rep = ProbeReport::new("modular_chains");
    rep.metric("branch_above_one", above as f64).metric("branch_at_most_one", below as f64).push_check(&t);
    rep.push_check(&local);
    let mut cov = Tally::hard("both_branches");
    let need = (trials / 10).min(100);
    cov.record(above.min(below) as f64, above >= need && below >= need);
    rep.push_check(&cov);
    Ok(finish(rep, cfg))
}

/// `cover_cube` on random cubes: containment and `|Q_a| <= 6^n |Q|`.
pub fn covering(n: usize, trials: usize, seed: u64) -> Result<ProbeReport> {
    let mut rng = stream(seed, "suite_covering");
    let mut contain = Tally::hard("contains");
    let mut ratio = Tally::hard("volume_ratio");
    let bound = 6f64.powi(n as i32);
    for _ in 0..trials {
        let side = (-10.0 * rng.gen::<f64>()).exp2();
        let mut corner = [0.0; 2];
        for c in corner.iter_mut().take(n) {
            *c = -1.0 + rng.gen::<f64>() * (3.0 - side);
        }
        let q = Cube::new(n, corner, side);
        let (_, c) = cover_cube(&q);
        let (qr, cr) = (q.rect(), c.rect());
        let tol = 1e-12 * cr.hi[0].abs().max(1.0);
        let inside = (0..n).all(|a| cr.lo[a] <= qr.lo[a] + tol && qr.hi[a] <= cr.hi[a] + tol);
        contain.record(if inside { 0.0 } else { 1.0 }, inside);
        ratio.leq(c.volume() / q.volume(), bound, 1e-12, 0.0);
    }
    let mut rep = ProbeReport::new("covering");
    rep.provenance.seed = Some(seed);
    rep.provenance.n = Some(n);
    rep.push_check(&contain).push_check(&ratio);
    Ok(rep)
}

fn cubes_meeting_box(g: ShiftedGrid, level: i32) -> Vec<GridCube> {
    let n = g.n;
    let lo = g.locate_point(level, &[-1.0, -1.0]);
    let hi = g.locate_point(level, &[2.0 - 1e-9, 2.0 - 1e-9]);
    let mut out = Vec::new();
    let r1 = if n == 2 { lo.index[1]..=hi.index[1] } else { 0..=0 };
    for a in lo.index[0]..=hi.index[0] {
        for b in r1.clone() {
            out.push(GridCube { grid: g, level, index: [a, b] });
        }
    }
    out
}

/// Exhaustive axioms at levels `-2..=m`: each level partitions the box
/// (every lattice center in exactly one cube, clipped volumes sum to the
/// box), and every cube sits inside its parent (so any two cubes are nested
/// or disjoint). In 1D, all pairs across levels are also compared directly.
pub fn grid_axioms(n: usize, m: u32) -> Result<ProbeReport> {
    let lat = Lattice::new(n, m)?;
    let bx = Rect::computational_box(n);
    let mut part = Tally::hard("partition");
    let mut nest = Tally::hard("nested");
    for g in build_shifted_grids(n)? {
        let mut all: Vec<GridCube> = Vec::new();
        for level in -2..=m as i32 {
            let cubes = cubes_meeting_box(g, level);
            let vol: f64 = cubes.iter().filter_map(|c| c.rect().intersection(&bx)).map(|r| r.volume()).sum();
            part.record((vol - bx.volume()).abs(), (vol - bx.volume()).abs() <= 1e-9);
            for cell in 0..lat.len() {
                let x = lat.center(cell);
                let at = g.locate_point(level, &x);
                let mut hits = 0;
                for da in -1..=1i64 {
                    for db in if n == 2 { -1..=1i64 } else { 0..=0 } {
                        let c = GridCube { grid: g, level, index: [at.index[0] + da, at.index[1] + db] };
                        if c.rect().contains_point(&x) {
                            hits += 1;
                        }
                    }
                }
                part.record(hits as f64, hits == 1);
            }
            for c in &cubes {
                let (p, r) = (c.parent().rect(), c.rect());
                let tol = 1e-12;
                let ok = (0..n).all(|a| p.lo[a] <= r.lo[a] + tol && r.hi[a] <= p.hi[a] + tol);
                nest.record(if ok { 0.0 } else { 1.0 }, ok);
            }
            if n == 1 {
                all.extend(cubes);
            }
        }
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                let (ra, rb) = (a.rect(), b.rect());
                let ov = ra.intersection(&rb).map_or(0.0, |r| r.volume());
                let ok = ov <= 1e-12 || (a.contains(b) || b.contains(a));
                nest.record(if ok { 0.0 } else { 1.0 }, ok);
            }
        }
    }
    let mut rep = ProbeReport::new("grid_axioms");
    rep.provenance.n = Some(n);
    rep.provenance.m = Some(m);
    rep.push_check(&part).push_check(&nest);
    Ok(rep)
}

/// `Mf <= 6^n sum_a M^{D_a} f` on random `f`.
pub fn pointwise_comparison(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let mut rng = stream(cfg.seed, "suite_comparison");
    let mut t = Tally::hard("pointwise");
    for _ in 0..trials {
        let f = random_support_function(lat, &mut rng);
        let r = check_grid_comparison(&f)?;
        for c in &r.checks {
            let mut one = Tally::hard("x");
            one.record(c.worst_ratio, c.passed);
            t.merge(&one);
        }
    }
    let mut rep = ProbeReport::new("pointwise_comparison");
    rep.push_check(&t);
    Ok(finish(rep, cfg))
}

/// Geometric decay `|Q ∩ Omega_{k+l}| <= 2^n gamma^{-l} |Q|` for `l <= 6`
/// and the stopping-time selection invariants, cycling through the grids.
pub fn cz_decay(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let grids = build_shifted_grids(cfg.n)?;
    let mut rng = stream(cfg.seed, "suite_cz");
    let mut decay = Tally::hard("decay");
    let mut sel = Tally::hard("selection");
    for i in 0..trials {
        let f = random_support_function(lat, &mut rng);
        let g = grids[i % grids.len()];
        for gamma in [2.0, 2f64.powi(cfg.n as i32 + 1)] {
            let cz = cz_decompose(&f, g, gamma, CzVariant::Global)?;
            decay.merge(&cz.check_decay(6));
            sel.merge(&cz.check_selection());
        }
    }
    let mut rep = ProbeReport::new("cz_decay");
    rep.push_check(&decay).push_check(&sel);
    Ok(finish(rep, cfg))
}

/// Sparse domination certificate, sparsity and disjointness.
pub fn sparse_domination(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let grids = build_shifted_grids(cfg.n)?;
    let mut rng = stream(cfg.seed, "suite_sparse");
    let mut merged: Vec<Tally> = ["pointwise", "sparsity", "disjoint"].iter().map(|n| Tally::hard(n)).collect();
    for i in 0..trials {
        let f = random_support_function(lat, &mut rng);
        for eta in [0.25, 0.5, 0.75] {
            let (_, r) = sparse_from_maximal(&f, grids[i % grids.len()], eta)?;
            for (t, c) in merged.iter_mut().zip(&r.checks) {
                let mut one = Tally::hard("x");
                for _ in 0..c.violations {
                    one.record(c.worst_ratio, false);
                }
                one.record(c.worst_ratio, c.passed);
                t.merge(&one);
            }
        }
    }
    let mut rep = ProbeReport::new("sparse_domination_suite");
    for t in &merged {
        rep.push_check(t);
    }
    Ok(finish(rep, cfg))
}

/// `int (M_S f) g = int f (M_S^* g)` on random triples.
pub fn adjoint_duality(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let grids = build_shifted_grids(cfg.n)?;
    let mut rng = stream(cfg.seed, "suite_adjoint");
    let mut t = Tally::hard("adjoint");
    for i in 0..trials {
        let h = random_support_function(lat, &mut rng);
        let (fam, _) = sparse_from_maximal(&h, grids[i % grids.len()], 0.5)?;
        let f = random_support_function(lat, &mut rng);
        let g = random_support_function(lat, &mut rng);
        let lhs = sparse_operator(&fam, &f)?.zip_map(&g, |a, b| a * b)?.integral();
        let rhs = f.zip_map(&adjoint_sparse_operator(&fam, &g)?, |a, b| a * b)?.integral();
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        let err = (lhs - rhs).abs() / scale;
        t.record(err, err <= 1e-10);
    }
    let mut rep = ProbeReport::new("adjoint_duality");
    rep.push_check(&t);
    Ok(finish(rep, cfg))
}

/// `A_p` of the unit weight, the converse inequality on sampled pairs and
/// the reverse-Hölder curve, for `|x - 1/2|^{1/2}`.
pub fn weights_suite(cfg: &SuiteConfig, pairs: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let n = cfg.n;
    let fam = CubeFamily::build(CubeFamilySpec::AllLatticeAligned { m: cfg.m.min(if n == 1 { 6 } else { 4 }) }, n)?;
    let one = LatticeFunction::constant(lat, 1.0)?;
    let mut unit = Tally::hard("unit_weight_exact");
    for p in [1.5, 2.0, 3.0] {
        let a = ap_constant(&one, p, &fam)?.value;
        unit.record(a, a == 1.0);
    }
    let v = LatticeFunction::from_fn(lat, |x| {
        let d: f64 = (0..n).map(|a| (x[a] - 0.5).powi(2)).sum::<f64>().sqrt();
        d.sqrt()
    })?;
    let conv = converse_check(&v, 2.0, &fam, pairs, cfg.seed)?;
    let rh = reverse_holder_probe(&v, &fam, &[1.0, 1.25, 1.5, 2.0, 3.0, 4.0])?;
    let mut c1 = Tally::hard("rh_c1");
    let c = rh.metrics["c(1)"];
    c1.record((c - 1.0).abs(), (c - 1.0).abs() <= 1e-12);
    let mut rep = ProbeReport::new("weights_suite");
    rep.provenance.family_hash = Some(fam.hash());
    rep.push_check(&unit).push_check(&c1);
    for r in [&conv, &rh] {
        rep.checks.extend(r.checks.iter().cloned());
    }
    rep.metric("ap_constant", conv.metrics["ap_constant"]);
    for (k, v) in &rh.metrics {
        rep.metric(k, *v);
    }
    Ok(finish(rep, cfg))
}

/// Rubio de Francia with the dyadic kind, `q = 2`, `A = 2`.
pub fn rubio_de_francia_suite(cfg: &SuiteConfig, trials: usize) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let kind = MaximalKind::Grid(ShiftedGrid::standard(cfg.n));
    let p = ExponentField::constant(lat, 2.0)?;
    let a = 2.0;
    let mut rng = stream(cfg.seed, "suite_rdf");
    let mut ge = Tally::hard("majorant");
    let mut nrm = Tally::hard("norm_doubling");
    let mut a1 = Tally::hard("a1_bound");
    let mut worst_a1 = 0.0f64;
    for _ in 0..trials {
        let g = random_support_function(lat, &mut rng);
        let r = rubio_de_francia(&g, &kind, a, 12)?;
        let ok = r.rg.values().iter().zip(g.values()).all(|(x, y)| x >= y);
        ge.record(if ok { 0.0 } else { 1.0 }, ok);
        nrm.leq(luxemburg_norm(&r.rg, &p)?, 2.0 * luxemburg_norm(&g, &p)?, 1e-12, 0.0);
        let tol = 2.0 * a * r.tail_bound.unwrap_or(f64::INFINITY);
        let mr = maximal(&r.rg, &kind)?;
        for (mv, rv) in mr.values().iter().zip(r.rg.values()) {
            a1.leq(*mv, 2.0 * a * rv + tol, 1e-12, 0.0);
        }
        worst_a1 = worst_a1.max(a1_ratio(&r.rg, &kind)?);
    }
    let mut rep = ProbeReport::new("rubio_de_francia");
    rep.metric("worst_a1_ratio", worst_a1).push_check(&ge).push_check(&nrm).push_check(&a1);
    rep.label("constants", "certified: constant exponent, dyadic kind, A = q'");
    Ok(finish(rep, cfg))
}

/// Single-cube density calibration: slope `1/q` for `q in {2, 3, 4}`.
pub fn density_calibration(cfg: &SuiteConfig) -> Result<ProbeReport> {
    let lat = cfg.lattice()?;
    let mut rep = ProbeReport::new("density_calibration");
    rep.columns(&["q", "delta_hat", "expected"]);
    let mut t = Tally::hard("slope");
    for q in [2.0, 3.0, 4.0] {
        let sp = SpaceSpec::new(ExponentField::constant(lat, q)?, WeightField::constant(lat, 1.0)?)?;
        let fam = DensityFamily::single(lat, Rect::support_box(cfg.n));
        let r = sparse_density_probe(&sp, &[fam], &DEFAULT_DENSITIES, 4, cfg.seed)?;
        let d = r.metrics["delta_hat"];
        t.record((d - 1.0 / q).abs(), (d - 1.0 / q).abs() <= 0.02);
        rep.row(vec![json!(q), json!(d), json!(1.0 / q)]);
    }
    rep.push_check(&t);
    Ok(finish(rep, cfg))
}

/// Truncation bound under the constants pipeline, plus a reduced-`k` run
/// where `A(Q)` is nonempty so the `t_Q` certificates are exercised.
pub fn truncation_suite(cfg: &SuiteConfig, families: usize, samples: usize, preset: &str) -> Result<Vec<ProbeReport>> {
    let lat = cfg.lattice()?;
    let space = SpaceSpec::from_preset(&SpacePreset::named(preset)?, lat)?;
    let ov = ConstantOverrides { trials: Some(cfg.trials(200)), ..Default::default() };
    let (c, crep) = LemmaConstants::derive(&space, &ov, cfg.seed)?;
    let depth = crate::duallab::probe_depth(lat);
    let fams = random_disjoint_families(cfg.n, depth, families, cfg.seed);
    let mut main = truncation_bound_check(&space, &c, &fams, samples, cfg.seed)?;
    main.label("space", preset);
    let mut what_if = reduced_k_truncation_check(&space, &c, &fams, samples, cfg.seed)?;
    what_if.label("space", preset);
    Ok(vec![finish(crep, cfg), finish(main, cfg), finish(what_if, cfg)])
}

/// Every suite at the configured resolution, trial counts scaled by
/// `cfg.scale`. Grid axioms run at `m.min(6)`.
pub fn run_selftest(cfg: &SuiteConfig) -> Result<Vec<ProbeReport>> {
    let c = *cfg;
    let suites: Vec<(&str, Box<dyn Fn() -> Result<Vec<ProbeReport>>>)> = vec![
        ("luxemburg", Box::new(move || Ok(vec![luxemburg_calibration(&c, c.trials(100))?]))),
        ("modular", Box::new(move || Ok(vec![modular_chains(&c, c.trials(1000))?]))),
        ("covering", Box::new(move || Ok(vec![covering(c.n, c.trials(10_000), c.seed)?]))),
        ("grid_axioms", Box::new(move || Ok(vec![grid_axioms(c.n, c.m.min(6))?]))),
        (
            "comparison",
            Box::new(move || Ok(vec![pointwise_comparison(&c, c.trials(if c.n == 1 { 1000 } else { 100 }))?])),
        ),
        ("cz", Box::new(move || Ok(vec![cz_decay(&c, c.trials(1000))?]))),
        ("sparse", Box::new(move || Ok(vec![sparse_domination(&c, c.trials(1000))?]))),
        ("adjoint", Box::new(move || Ok(vec![adjoint_duality(&c, c.trials(1000))?]))),
        ("weights", Box::new(move || Ok(vec![weights_suite(&c, c.trials(10_000))?]))),
        ("rdf", Box::new(move || Ok(vec![rubio_de_francia_suite(&c, c.trials(100))?]))),
        ("density", Box::new(move || Ok(vec![density_calibration(&c)?]))),
        ("truncation", Box::new(move || truncation_suite(&c, c.trials(100), c.trials(1000), "loghold"))),
    ];
    let mut out = Vec::new();
    for (name, run) in suites {
        let t0 = std::time::Instant::now();
        out.extend(run()?);
        log::info!("selftest {name}: {:.2?}", t0.elapsed());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_selftest_passes_and_is_deterministic() {
        let cfg = SuiteConfig { n: 1, m: 6, seed: 3, scale: 0.02 };
        let a = run_selftest(&cfg).unwrap();
        for r in &a {
            assert!(r.passed(), "{}: {:?}", r.id, r.failures());
        }
        let b = run_selftest(&cfg).unwrap();
        let ja: Vec<String> = a.iter().map(|r| r.canonical_json()).collect();
        let jb: Vec<String> = b.iter().map(|r| r.canonical_json()).collect();
        assert_eq!(ja, jb);
    }

    #[test]
    fn grid_axioms_small_2d() {
        let r = grid_axioms(2, 2).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
    }
}
