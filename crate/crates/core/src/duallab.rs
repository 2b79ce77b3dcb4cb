//! Experiments around duality of maximal-operator boundedness on weighted
//! variable Lebesgue spaces `X = L^{p(.)}_w` and `X' = L^{p'(.)}_{w^{-1}}`.
//!
//! All probe cubes here are standard dyadic cubes of `[0,1)^n`, so they are
//! unions of lattice cells whenever their level is at most `m`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::czsparse::{sparse_from_maximal, SparseFamily};
use crate::lattice::{Lattice, LatticeFunction, Rect, ShiftedGrid};
use crate::maximal::{operator_norm_lower_bound, CandidateFamily, MaximalKind};
use crate::presets::SpacePreset;
use crate::report::{family_hash, ProbeReport, Tally};
use crate::rng::{random_support_function, stream, StreamRng};
use crate::varlp::{luxemburg_norm, modular, ExponentField, WeightField};
use crate::weights::{ainfty_absolute_continuity_check, ap_constant, reverse_holder_probe, CubeFamily, CubeFamilySpec};
use crate::{Error, Result};

/// The pair `(p, w)` defining `X`.
#[derive(Clone, Debug)]
pub struct SpaceSpec {
    pub p: ExponentField,
    pub w: WeightField,
}

impl SpaceSpec {
    pub fn new(p: ExponentField, w: WeightField) -> Result<Self> {
        if p.lattice() != w.lattice() {
            return Err(Error::LatticeMismatch("exponent and weight lattices differ".into()));
        }
        Ok(SpaceSpec { p, w })
    }

    pub fn from_preset(preset: &SpacePreset, lat: Lattice) -> Result<Self> {
        let (p, w) = preset.build(lat)?;
        Self::new(p, w)
    }

    pub fn lattice(&self) -> Lattice {
        self.p.lattice()
    }

    /// `X' = L^{p'}_{w^{-1}}`.
    pub fn associate(&self) -> SpaceSpec {
        SpaceSpec { p: self.p.conjugate(), w: self.w.inverse() }
    }

    pub fn norm(&self, f: &LatticeFunction) -> Result<f64> {
        let fw = f.zip_map(self.w.field(), |a, b| a * b)?;
        luxemburg_norm(&fw, &self.p)
    }

    /// `W = w^{p(.)}`.
    pub fn density(&self) -> Result<LatticeFunction> {
        self.w.pow_p(&self.p)
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Finds `u` with `g(u) = target` for nondecreasing `g`; returns `(lo, hi)`
/// with `g(lo) <= target < g(hi)` up to the final width.
fn solve_increasing(g: impl Fn(f64) -> f64, target: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut step = 2.0;
    while g(lo) > target {
        lo -= step;
        step *= 2.0;
        if lo < -1e4 {
            return Err(Error::NonFinite("no lower bracket".into()));
        }
    }
    step = 2.0;
    while g(hi) <= target {
        hi += step;
        step *= 2.0;
        if hi > 1e4 {
            return Err(Error::NonFinite("no upper bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok((lo, hi))
}

/// The cells of one cube with their overlap volume, `ln w` and `p`.
#[derive(Clone, Debug)]
pub struct CubeProfile {
    pub rect: Rect,
    pub volume: f64,
    cells: Vec<(f64, f64, f64)>,
    t_max: f64,
}

impl CubeProfile {
    pub fn new(space: &SpaceSpec, rect: Rect) -> Result<Self> {
        let lat = space.lattice();
        let cells: Vec<(f64, f64, f64)> = lat
            .overlaps(&rect)
            .into_iter()
            .map(|(c, v)| (v.ln(), space.w.values()[c].ln(), space.p.values()[c]))
            .collect();
        if cells.is_empty() {
            return Err(Error::ZeroVolume);
        }
        let mut prof = CubeProfile { rect, volume: rect.volume(), cells, t_max: 0.0 };
        let (lo, _) = solve_increasing(|u| prof.ln_power_integral(u, 1.0), 0.0)?;
        prof.t_max = lo.exp();
        Ok(prof)
    }

    /// `ln int_Q (e^u w)^{s p}`.
    pub fn ln_power_integral(&self, ln_t: f64, s: f64) -> f64 {
        log_sum_exp(self.cells.iter().map(|&(lv, lw, p)| lv + s * p * (ln_t + lw)))
    }

    /// `int_Q (t w)^{p}`.
    pub fn modular(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.ln_power_integral(t.ln(), 1.0).exp()
    }

    /// `ln |Q| ((1/|Q|) int_Q (t w)^{s p})^{1/s}`.
    pub fn ln_rh_mass(&self, ln_t: f64, s: f64) -> f64 {
        (1.0 - 1.0 / s) * self.volume.ln() + self.ln_power_integral(ln_t, s) / s
    }

    pub fn rh_mass(&self, t: f64, s: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.ln_rh_mass(t.ln(), s).exp()
    }

    /// `sup { t : int_Q (t w)^p <= 1 }`.
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// `||chi_Q||_{L^p_w} = 1 / t_max`.
    pub fn char_norm(&self) -> f64 {
        1.0 / self.t_max
    }

    /// Lower weighted median of `p` over `Q` and the volume fractions of
    /// `{p <= m}` and `{p >= m}`.
    pub fn lower_median(&self) -> (f64, f64, f64) {
        let mut cells: Vec<(f64, f64)> = self.cells.iter().map(|&(lv, _, p)| (p, lv.exp())).collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = cells.iter().map(|c| c.1).sum();
        let mut acc = 0.0;
        let mut med = cells[cells.len() - 1].0;
        for &(p, v) in &cells {
            acc += v;
            if acc >= 0.5 * total * (1.0 - 1e-12) {
                med = p;
                break;
            }
        }
        let e1: f64 = cells.iter().filter(|c| c.0 <= med).map(|c| c.1).sum();
        let e2: f64 = cells.iter().filter(|c| c.0 >= med).map(|c| c.1).sum();
        (med, e1 / total, e2 / total)
    }
}

/// Overrides for the constants pipeline; unset fields are derived.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantOverrides {
    pub r: Option<f64>,
    pub c: Option<f64>,
    pub s: Option<f64>,
    pub nu: Option<f64>,
    pub eta_exp: Option<f64>,
    /// Replaces the derived `k` (what-if runs; the family-sum bound then
    /// no longer follows from the pipeline).
    pub k: Option<f64>,
    pub trials: Option<usize>,
}

/// Numbers chosen for the truncation, scale-window and key bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub r: f64,
    pub c: f64,
    /// `2^{p_+/p_- + 1} c`.
    pub k: f64,
    pub s: f64,
    pub nu: f64,
    /// `(1 + min(nu, r)) / 2`.
    pub gamma: f64,
    /// `(r - gamma) / (gamma (1 + (s-1) r))`.
    pub eps: f64,
    /// `(1 + r(s-1)) / (1 + gamma(s-1))`.
    pub q: f64,
    /// Power of `t` in the small-`t` term, `eps/(1+eps) p_-` unless overridden.
    pub eta_exp: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

pub const DEFAULT_R: f64 = 1.25;
const RH_GRID: [f64; 6] = [1.1, 1.25, 1.5, 2.0, 3.0, 4.0];
/// Largest accepted reverse-Hölder constant when reading off `nu`.
const RH_CAP: f64 = 10.0;

impl LemmaConstants {
    pub fn from_parts(r: f64, c: f64, s: f64, nu: f64, p_minus: f64, p_plus: f64) -> Result<Self> {
        if !(r > 1.0 && c >= 1.0 && s > 1.0 && nu > 1.0) {
            return Err(Error::InvalidParameter(format!("constants out of range: r={r} c={c} s={s} nu={nu}")));
        }
        let k = (p_plus / p_minus + 1.0).exp2() * c;
        let gamma = 0.5 * (1.0 + nu.min(r));
        let eps = (r - gamma) / (gamma * (1.0 + (s - 1.0) * r));
        let q = (1.0 + r * (s - 1.0)) / (1.0 + gamma * (s - 1.0));
        let eta_exp = eps / (1.0 + eps) * p_minus;
        Ok(LemmaConstants { r, c, k, s, nu, gamma, eps, q, eta_exp, p_minus, p_plus })
    }

    /// Same constants with a different `k` (tests and what-if runs).
    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    /// Runs the pipeline: `c = 2 c_hat(r)` from the disjoint-family probe,
    /// `s` and `nu` from the absolute-continuity and reverse-Hölder probes on
    /// `W = w^p`. Every pick lands in the returned report.
    pub fn derive(space: &SpaceSpec, ov: &ConstantOverrides, seed: u64) -> Result<(Self, ProbeReport)> {
        let lat = space.lattice();
        let mut rep = ProbeReport::new("constants_pipeline");
        rep.provenance.seed = Some(seed);
        let r = ov.r.unwrap_or(DEFAULT_R);
        let c = match ov.c {
            Some(c) => c,
            None => {
                let probe = disjoint_family_rh_probe(space, &[r], ov.trials.unwrap_or(200), seed)?;
                let c_hat = probe.metrics[&format!("c_hat({r})")];
                rep.metric("c_hat", c_hat);
                2.0 * c_hat
            }
        };
        let dens = space.density()?;
        let fam = CubeFamily::build(
            CubeFamilySpec::AllLatticeAligned { m: lat.m.min(if lat.n == 1 { 6 } else { 4 }) },
            lat.n,
        )?;
        rep.provenance.family_hash = Some(fam.hash());
        let s = match ov.s {
            Some(s) => s,
            None => {
                let ai = ainfty_absolute_continuity_check(&dens, &fam, 4000, seed)?;
                let fitted = ai.metrics.get("lower_envelope_exponent").copied().unwrap_or(1.0);
                rep.metric("lower_envelope_exponent", fitted);
                fitted.max(1.5)
            }
        };
        let nu = match ov.nu {
            Some(nu) => nu,
            None => {
                let rh = reverse_holder_probe(&dens, &fam, &RH_GRID)?;
                let mut nu = 1.05;
                for &rr in &RH_GRID {
                    match rh.metrics.get(&format!("c({rr})")) {
                        Some(&cr) if cr.is_finite() && cr <= RH_CAP => nu = rr,
                        _ => break,
                    }
                }
                if nu == 1.05 {
                    rep.note("no reverse Hoelder exponent on the grid stayed below the cap; nu set to 1.05");
                }
                nu
            }
        };
        let mut k = Self::from_parts(r, c, s, nu, space.p.p_minus(), space.p.p_plus())?;
        if let Some(e) = ov.eta_exp {
            k.eta_exp = e;
        }
        if let Some(kk) = ov.k {
            k.k = kk;
            rep.note("k overridden");
        }
        if let Ok(a) = ap_constant(&dens, k.s, &fam) {
            rep.metric("ap_s_of_density", a.value);
        }
        rep.metric("r", k.r)
            .metric("c", k.c)
            .metric("k", k.k)
            .metric("s", k.s)
            .metric("nu", k.nu)
            .metric("gamma", k.gamma)
            .metric("eps", k.eps)
            .metric("q", k.q)
            .metric("eta_exp", k.eta_exp);
        rep.note("eta_exp is read off the small-t estimate as (eps/(1+eps)) p_-; it is configurable");
        Ok((k, rep))
    }
}

/// A random finite family of pairwise disjoint standard dyadic cubes in
/// `[0,1)^n`, from a random partition of depth at most `max_level`.
pub fn random_disjoint_family(n: usize, max_level: u32, rng: &mut StreamRng) -> Vec<Rect> {
    let mut leaves = Vec::new();
    let mut stack = vec![(0u32, [0u64; 2])];
    while let Some((level, idx)) = stack.pop() {
        let split = level < max_level && rng.gen_bool(if level == 0 { 0.9 } else { 0.55 });
        if split {
            for c in 0..(1u64 << n) {
                let mut child = [0u64; 2];
                for a in 0..n {
                    child[a] = 2 * idx[a] + ((c >> a) & 1);
                }
                stack.push((level + 1, child));
            }
        } else {
            let side = (-(level as f64)).exp2();
            let mut lo = [0.0; 2];
            let mut hi = [0.0; 2];
            for a in 0..n {
                lo[a] = idx[a] as f64 * side;
                hi[a] = lo[a] + side;
            }
            leaves.push(Rect::new(n, lo, hi));
        }
    }
    let kept: Vec<Rect> = leaves.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    if kept.is_empty() {
        vec![leaves[0]]
    } else {
        kept
    }
}

pub fn random_disjoint_families(n: usize, max_level: u32, count: usize, seed: u64) -> Vec<Vec<Rect>> {
    let mut rng = stream(seed, "disjoint_families");
    (0..count).map(|_| random_disjoint_family(n, max_level, &mut rng)).collect()
}

/// Deepest probe level: cubes stay unions of cells and runs stay cheap.
pub fn probe_depth(lat: Lattice) -> u32 {
    lat.m.min(if lat.n == 1 { 6 } else { 3 })
}

/// For random disjoint `pi` and `t_Q >= 0` scaled so that
/// `sum_Q int_Q (t_Q w)^p = 1`, the largest
/// `sum_Q |Q| ((1/|Q|) int_Q (t_Q w)^{r p})^{1/r}` seen, per `r`.
pub fn disjoint_family_rh_probe(space: &SpaceSpec, r_grid: &[f64], trials: usize, seed: u64) -> Result<ProbeReport> {
    let lat = space.lattice();
    let mut rng = stream(seed, "disjoint_family_rh");
    let mut rep = ProbeReport::new("disjoint_family_rh");
    rep.provenance.seed = Some(seed);
    rep.columns(&["r", "c_hat", "trials"]);
    let mut best = vec![0.0f64; r_grid.len()];
    let mut norm = Tally::hard("normalized");
    let mut jensen = Tally::hard("jensen_lower_bound");
    let mut hashes = Vec::new();
    for _ in 0..trials {
        let fam = random_disjoint_family(lat.n, probe_depth(lat), &mut rng);
        let profs: Vec<CubeProfile> = fam.iter().map(|q| CubeProfile::new(space, *q)).collect::<Result<_>>()?;
        let mut u: Vec<f64> = fam.iter().map(|_| (rng.gen_range(-4.0..4.0f64)).exp()).collect();
        for ui in u.iter_mut() {
            if rng.gen_bool(0.2) {
                *ui = 0.0;
            }
        }
        if u.iter().all(|&x| x == 0.0) {
            u[0] = 1.0;
        }
        let total = |ln_l: f64| {
            log_sum_exp(
                profs
                    .iter()
                    .zip(&u)
                    .filter(|(_, &ui)| ui > 0.0)
                    .map(|(pr, &ui)| pr.ln_power_integral(ln_l + ui.ln(), 1.0)),
            )
        };
        let (lo, hi) = solve_increasing(total, 0.0)?;
        let ln_l = 0.5 * (lo + hi);
        let t: Vec<f64> = u.iter().map(|&ui| ui * ln_l.exp()).collect();
        let hyp: f64 = profs.iter().zip(&t).map(|(pr, &tq)| pr.modular(tq)).sum();
        norm.record((hyp - 1.0).abs(), (hyp - 1.0).abs() <= 1e-9);
        for (ri, &r) in r_grid.iter().enumerate() {
            let concl: f64 = profs.iter().zip(&t).map(|(pr, &tq)| pr.rh_mass(tq, r)).sum();
            jensen.leq(hyp, concl, 1e-10, 0.0);
            best[ri] = best[ri].max(concl);
        }
        hashes.push(fam);
    }
    for (&r, &c) in r_grid.iter().zip(&best) {
        rep.metric(&format!("c_hat({r})"), c);
        rep.row(vec![json!(r), json!(c), json!(trials)]);
    }
    rep.provenance.family_hash = Some(family_hash(&hashes));
    rep.push_check(&norm).push_check(&jensen);
    rep.note(format!("no-violation statement only: maxima over {trials} random families"));
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TqBq {
    pub t_max: f64,
    pub t_q: f64,
    pub b_q: f64,
    pub modular_at_tq: f64,
    /// `|R(t_Q) - k int_Q (t_Q w)^p| / (k int_Q (t_Q w)^p)`, zero when `t_Q = 0`.
    pub qleft_residual: f64,
    pub grid_points: usize,
}

/// Lowest probed `t` relative to `t_max` in the descending scan.
const SCAN_DEPTH: f64 = 1e-12;

fn scan_crossing(prof: &CubeProfile, c: &LemmaConstants, points: usize) -> f64 {
    let ln_g = |u: f64| prof.ln_rh_mass(u, c.r) - c.k.ln() - prof.ln_power_integral(u, 1.0);
    let top = prof.t_max().ln();
    let span = -SCAN_DEPTH.ln();
    let us: Vec<f64> = (0..points).map(|j| top - span * j as f64 / (points - 1) as f64).collect();
    let Some(j) = us.iter().position(|&u| ln_g(u) > 0.0) else {
        return 0.0;
    };
    if j == 0 {
        return prof.t_max();
    }
    // ln_g(us[j]) > 0 >= ln_g(us[j-1])
    let (mut lo, mut hi) = (us[j], us[j - 1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// `t_Q = sup A(Q)` by a descending log scan of
/// `G(t) = |Q|(avg (tw)^{rp})^{1/r} / (k int_Q (tw)^p)` over `(0, t_max]`,
/// bisected to the crossing `G = 1`; the scan doubles from 32 points until
/// two consecutive grids agree, and gives up past 1024.
pub fn compute_tq_bq(prof: &CubeProfile, c: &LemmaConstants) -> Result<TqBq> {
    let mut points = 32;
    let mut prev = scan_crossing(prof, c, points);
    loop {
        let next_points = points * 2;
        if next_points > 1024 {
            return Err(Error::GridTooCoarse(points));
        }
        let next = scan_crossing(prof, c, next_points);
        let agree = (prev == 0.0 && next == 0.0) || (next - prev).abs() <= 1e-9 * next.abs().max(prev.abs());
        points = next_points;
        prev = next;
        if agree {
            break;
        }
    }
    let t_q = prev;
    let (b_q, m_q, resid) = if t_q > 0.0 {
        let b = prof.rh_mass(t_q, c.r);
        let m = prof.modular(t_q);
        (b, m, (b - c.k * m).abs() / (c.k * m))
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(TqBq { t_max: prof.t_max(), t_q, b_q, modular_at_tq: m_q, qleft_residual: resid, grid_points: points })
}

fn rect_key(r: &Rect) -> [u64; 4] {
    [r.lo[0].to_bits(), r.lo[1].to_bits(), r.hi[0].to_bits(), r.hi[1].to_bits()]
}

/// `t_Q, b(Q)` for every distinct cube in `families`, keyed by geometry.
fn tq_table(
    space: &SpaceSpec,
    c: &LemmaConstants,
    families: &[Vec<Rect>],
) -> Result<BTreeMap<[u64; 4], (CubeProfile, TqBq)>> {
    let mut distinct: BTreeMap<[u64; 4], Rect> = BTreeMap::new();
    for q in families.iter().flatten() {
        distinct.insert(rect_key(q), *q);
    }
    let items: Vec<([u64; 4], Rect)> = distinct.into_iter().collect();
    let done: Vec<Result<([u64; 4], (CubeProfile, TqBq))>> = items
        .par_iter()
        .map(|(k, q)| {
            let prof = CubeProfile::new(space, *q)?;
            let tb = compute_tq_bq(&prof, c)?;
            Ok((*k, (prof, tb)))
        })
        .collect();
    done.into_iter().collect()
}

/// `k` exceeds the single-cube reverse-Hölder mass at the modular boundary,
/// i.e. `G(t_max) <= 1`; the certificates on `t_Q` rest on this.
fn single_cube_premise(prof: &CubeProfile, tb: &TqBq, c: &LemmaConstants) -> bool {
    prof.rh_mass(tb.t_max, c.r) <= c.k
}

/// `impcond`, `qleft1` and the premise tally. With `premise_only`, cubes
/// violating the premise are left out of the certificates.
fn tq_checks(
    table: &BTreeMap<[u64; 4], (CubeProfile, TqBq)>,
    c: &LemmaConstants,
    premise_only: bool,
) -> (Tally, Tally, Tally) {
    let mut imp = Tally::hard("impcond");
    let mut ql = Tally::hard("qleft1");
    let mut prem = Tally::soft("single_cube_premise");
    for (prof, tb) in table.values() {
        let ok = single_cube_premise(prof, tb, c);
        prem.record(prof.rh_mass(tb.t_max, c.r) / c.k, ok);
        if tb.t_q > 0.0 && (ok || !premise_only) {
            imp.record(tb.modular_at_tq, tb.modular_at_tq < 1.0);
            ql.record(tb.qleft_residual, tb.qleft_residual <= 1e-6);
        }
    }
    (imp, ql, prem)
}

/// `sum_{Q in pi} b(Q) <= 2k` per family, the pointwise bound
/// `R(t) <= k int_Q (tw)^p + b(Q)` on sampled `(Q, t)` with modular `<= 1`,
/// and the certificates of every computed `t_Q`.
pub fn truncation_bound_check(
    space: &SpaceSpec,
    c: &LemmaConstants,
    families: &[Vec<Rect>],
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    truncation_inner(space, c, families, samples, seed, false)
}

/// The truncation probe with `k` lowered to `1 + min(k - 1, 1) / 4`, where
/// `A(Q)` is usually nonempty. The family-sum bound no longer follows and is
/// informational; `impcond` and `qleft1` are checked on cubes satisfying the
/// single-cube premise.
pub fn reduced_k_truncation_check(
    space: &SpaceSpec,
    c: &LemmaConstants,
    families: &[Vec<Rect>],
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let reduced = c.clone().with_k(1.0 + 0.25 * (c.k - 1.0).min(1.0));
    let mut rep = truncation_inner(space, &reduced, families, samples, seed, true)?;
    rep.id = "truncation_bound_reduced_k".into();
    for ch in rep.checks.iter_mut().filter(|ch| ch.name == "family_sum") {
        ch.hard = false;
    }
    rep.metric("pipeline_k", c.k);
    rep.note(format!("what-if run with k = {} in place of {}", reduced.k, c.k));
    Ok(rep)
}

fn truncation_inner(
    space: &SpaceSpec,
    c: &LemmaConstants,
    families: &[Vec<Rect>],
    samples: usize,
    seed: u64,
    premise_only: bool,
) -> Result<ProbeReport> {
    let table = tq_table(space, c, families)?;
    let mut sums = Tally::hard("family_sum");
    let mut max_sum = 0.0f64;
    for fam in families {
        let s: f64 = fam.iter().map(|q| table[&rect_key(q)].1.b_q).sum();
        max_sum = max_sum.max(s);
        sums.leq(s, 2.0 * c.k, 1e-12, 0.0);
    }
    let mut eqb = Tally::hard("eqb");
    let keys: Vec<&[u64; 4]> = table.keys().collect();
    let mut rng = stream(seed, "truncation_samples");
    for _ in 0..samples {
        let (prof, tb) = &table[keys[rng.gen_range(0..keys.len())]];
        let t = tb.t_max * (-rng.gen::<f64>() * 6.0 * std::f64::consts::LN_10).exp();
        let m = prof.modular(t);
        if m > 1.0 {
            continue;
        }
        eqb.leq(prof.rh_mass(t, c.r), c.k * m + tb.b_q, 1e-9, 0.0);
    }
    let (imp, ql, prem) = tq_checks(&table, c, premise_only);
    let nonzero = table.values().filter(|(_, tb)| tb.t_q > 0.0).count();
    let mut rep = ProbeReport::new("truncation_bound");
    rep.provenance.seed = Some(seed);
    rep.provenance.family_hash = Some(family_hash(families));
    rep.metric("k", c.k)
        .metric("two_k", 2.0 * c.k)
        .metric("max_family_sum", max_sum)
        .metric("slack", 2.0 * c.k - max_sum)
        .metric("cubes", table.len() as f64)
        .metric("nonzero_tq", nonzero as f64)
        .push_check(&sums)
        .push_check(&eqb)
        .push_check(&imp)
        .push_check(&ql)
        .push_check(&prem);
    rep.columns(&["corner", "side", "t_max", "t_q", "b_q", "grid_points"]);
    for (prof, tb) in table.values() {
        rep.row(vec![
            json!(prof.rect.lo[..prof.rect.n].to_vec()),
            json!(prof.rect.hi[0] - prof.rect.lo[0]),
            json!(tb.t_max),
            json!(tb.t_q),
            json!(tb.b_q),
            json!(tb.grid_points),
        ]);
    }
    Ok(rep)
}

/// `((1/|Q|) int_Q (tw)^{gamma p})^{1/gamma} / ((1/|Q|) int_Q (tw)^p)`.
pub fn window_rh_ratio(prof: &CubeProfile, gamma: f64, t: f64) -> f64 {
    let u = t.ln();
    let lq = prof.volume.ln();
    ((prof.ln_power_integral(u, gamma) - lq) / gamma - (prof.ln_power_integral(u, 1.0) - lq)).exp()
}

/// `t` range `[min(1, N^{-(1+eps)}), max(1, N^{-(1+eps)})]`, `N = ||chi_Q||`.
pub fn scale_window(prof: &CubeProfile, eps: f64) -> (f64, f64) {
    let b = prof.char_norm().powf(-(1.0 + eps));
    (b.min(1.0), b.max(1.0))
}

fn log_sweep(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if lo == hi || count < 2 {
        return vec![hi];
    }
    (0..count).map(|j| (lo.ln() + (hi.ln() - lo.ln()) * j as f64 / (count - 1) as f64).exp()).collect()
}

/// Reverse-Hölder ratio swept over each cube's scale window plus the
/// median-exponent diagnostic.
pub fn scale_window_rh_check(space: &SpaceSpec, c: &LemmaConstants, cubes: &[Rect]) -> Result<ProbeReport> {
    let mut rep = ProbeReport::new("scale_window_rh");
    rep.columns(&["corner", "side", "norm", "t_lo", "t_hi", "c", "median_p", "e1", "e2"]);
    let mut halves = Tally::hard("median_halves");
    let mut c_hat = 0.0f64;
    for q in cubes {
        let prof = CubeProfile::new(space, *q)?;
        let (lo, hi) = scale_window(&prof, c.eps);
        let cq = log_sweep(lo, hi, 32).into_iter().map(|t| window_rh_ratio(&prof, c.gamma, t)).fold(0.0, f64::max);
        c_hat = c_hat.max(cq);
        let (med, e1, e2) = prof.lower_median();
        halves.record(0.5 - e1.min(e2), e1 >= 0.5 * (1.0 - 1e-12) && e2 >= 0.5 * (1.0 - 1e-12));
        rep.row(vec![
            json!(q.lo[..q.n].to_vec()),
            json!(q.hi[0] - q.lo[0]),
            json!(prof.char_norm()),
            json!(lo),
            json!(hi),
            json!(cq),
            json!(med),
            json!(e1),
            json!(e2),
        ]);
    }
    rep.provenance.family_hash = Some(family_hash(cubes));
    rep.metric("c_hat", c_hat).metric("gamma", c.gamma).metric("eps", c.eps).push_check(&halves);
    Ok(rep)
}

/// Smallest `c` with `|Q|(avg (tw)^{gamma p})^{1/gamma} <= c int_Q (tw)^p
/// + 2 t^eta b(Q) 1_{t<1}` at one `t`; needs `t ||chi_Q|| <= 1`.
pub fn key_bound_constant(prof: &CubeProfile, c: &LemmaConstants, b_q: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || t * prof.char_norm() > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!("t = {t} outside (0, 1/||chi_Q||]")));
    }
    let lhs = prof.rh_mass(t, c.gamma);
    let extra = if t < 1.0 { 2.0 * t.powf(c.eta_exp) * b_q } else { 0.0 };
    Ok((lhs - extra).max(0.0) / prof.modular(t))
}

/// Minimal constant in the key bound per cube over `t_sweep` log-spaced
/// `t in [1e-6/N, 1/N]`, the family sums of `b`, and agreement of the
/// `t >= 1` branch with [`window_rh_ratio`].
pub fn key_rh_bound_check(
    space: &SpaceSpec,
    c: &LemmaConstants,
    families: &[Vec<Rect>],
    t_sweep: usize,
) -> Result<ProbeReport> {
    let table = tq_table(space, c, families)?;
    let mut agree = Tally::hard("large_t_matches_window");
    let mut sums = Tally::soft("family_sum");
    let (mut c_small, mut c_large) = (0.0f64, 0.0f64);
    let mut rep = ProbeReport::new("key_rh_bound");
    rep.columns(&["corner", "side", "norm", "b_q", "c_small_t", "c_large_t"]);
    for (prof, tb) in table.values() {
        let top = 1.0 / prof.char_norm();
        let mut ts = log_sweep(top * 1e-6, top, t_sweep.max(2));
        if top > 1.0 {
            ts.push(1.0);
        }
        let (mut cs, mut cl) = (0.0f64, 0.0f64);
        for t in ts {
            let ct = key_bound_constant(prof, c, tb.b_q, t)?;
            if t < 1.0 {
                cs = cs.max(ct);
            } else {
                cl = cl.max(ct);
                let w = window_rh_ratio(prof, c.gamma, t);
                agree.record((ct - w).abs() / w, (ct - w).abs() <= 1e-9 * w);
            }
        }
        c_small = c_small.max(cs);
        c_large = c_large.max(cl);
        rep.row(vec![
            json!(prof.rect.lo[..prof.rect.n].to_vec()),
            json!(prof.rect.hi[0] - prof.rect.lo[0]),
            json!(prof.char_norm()),
            json!(tb.b_q),
            json!(cs),
            json!(cl),
        ]);
    }
    let mut max_sum = 0.0f64;
    for fam in families {
        let s: f64 = fam.iter().map(|q| table[&rect_key(q)].1.b_q).sum();
        max_sum = max_sum.max(s);
        sums.leq(s, 2.0 * c.k, 1e-12, 0.0);
    }
    let (imp, ql, _) = tq_checks(&table, c, false);
    rep.provenance.family_hash = Some(family_hash(families));
    rep.metric("c_tilde", c_small.max(c_large))
        .metric("c_tilde_small_t", c_small)
        .metric("c_tilde_large_t", c_large)
        .metric("max_family_b_sum", max_sum)
        .metric("eta_exp", c.eta_exp)
        .push_check(&agree)
        .push_check(&sums)
        .push_check(&imp)
        .push_check(&ql);
    Ok(rep)
}

/// A family `Q` with the lattice cells of `E(Q)` (pairwise disjoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFamily {
    pub cubes: Vec<Rect>,
    pub e_cells: Vec<Vec<usize>>,
}

impl DensityFamily {
    /// From a sparse family whose cubes are unions of lattice cells (the
    /// standard grid at levels `<= m`).
    pub fn from_sparse(fam: &SparseFamily, lat: Lattice) -> Self {
        let cubes = fam.entries.iter().map(|e| e.cube).collect();
        let e_cells = fam
            .entries
            .iter()
            .map(|e| {
                lat.cells_with_center_in(&e.cube)
                    .into_iter()
                    .filter(|&c| {
                        let x = lat.center(c);
                        !e.removed.iter().any(|r| r.contains_point(&x))
                    })
                    .collect()
            })
            .collect();
        DensityFamily { cubes, e_cells }
    }

    /// `[0, 2^-j)^n`, `j = 0..=depth`, each owning the part outside the next.
    pub fn chain(lat: Lattice, depth: u32) -> Self {
        let n = lat.n;
        let cubes: Vec<Rect> = (0..=depth).map(|j| Rect::cube_span(n, 0.0, (-(j as f64)).exp2())).collect();
        let e_cells = (0..cubes.len())
            .map(|j| {
                lat.cells_with_center_in(&cubes[j])
                    .into_iter()
                    .filter(|&c| j + 1 == cubes.len() || !cubes[j + 1].contains_point(&lat.center(c)))
                    .collect()
            })
            .collect();
        DensityFamily { cubes, e_cells }
    }

    pub fn single(lat: Lattice, q: Rect) -> Self {
        DensityFamily { cubes: vec![q], e_cells: vec![lat.cells_with_center_in(&q)] }
    }
}

fn sparse_sum(lat: Lattice, cubes: &[Rect], alpha: &[f64]) -> Result<LatticeFunction> {
    let mut v = vec![0.0; lat.len()];
    for (q, a) in cubes.iter().zip(alpha) {
        for (c, ov) in lat.overlaps(q) {
            v[c] += a * ov / lat.cell_volume();
        }
    }
    LatticeFunction::new(lat, v)
}

/// One draw of `G_Q subset E(Q)` with `|G_Q| ~ rho |Q|`; returns the
/// function `sum alpha_Q chi_{G_Q}` and the realized `max |G_Q|/|Q|`.
fn draw_subsets(
    lat: Lattice,
    fam: &DensityFamily,
    alpha: &[f64],
    rho: f64,
    rng: &mut StreamRng,
) -> Result<(LatticeFunction, f64)> {
    let cv = lat.cell_volume();
    let mut v = vec![0.0; lat.len()];
    let mut rho_hat = 0.0f64;
    for ((q, cells), a) in fam.cubes.iter().zip(&fam.e_cells).zip(alpha) {
        let want = ((rho * q.volume() / cv) + 1e-9).floor() as usize;
        let take = want.min(cells.len());
        if take == 0 {
            continue;
        }
        let mut pick = cells.clone();
        pick.shuffle(rng);
        for &c in &pick[..take] {
            v[c] = *a;
        }
        rho_hat = rho_hat.max(take as f64 * cv / q.volume());
    }
    Ok((LatticeFunction::new(lat, v)?, rho_hat))
}

fn fit_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

pub const DEFAULT_DENSITIES: [f64; 8] = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625];

/// Norm ratios `||sum alpha_Q chi_{G_Q}||_X / ||sum alpha_Q chi_Q||_X` for
/// random positive `alpha` and random `G_Q subset E(Q)` of density `rho`, with
/// a log-log fit of the ratio against the realized density.
pub fn sparse_density_probe(
    space: &SpaceSpec,
    families: &[DensityFamily],
    densities: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if families.is_empty() || densities.is_empty() {
        return Err(Error::InvalidParameter("need families and densities".into()));
    }
    let lat = space.lattice();
    let mut rng = stream(seed, "sparse_density");
    let mut pts = Vec::new();
    let mut bins: Vec<(usize, f64, f64)> = vec![(0, 0.0, 0.0); densities.len()];
    let mut mono = Tally::hard("monotone");
    let mut skipped = 0usize;
    for trial in 0..trials {
        let fam = &families[trial % families.len()];
        let alpha: Vec<f64> = fam.cubes.iter().map(|_| (rng.gen_range(-3.0..3.0f64)).exp2()).collect();
        let full = space.norm(&sparse_sum(lat, &fam.cubes, &alpha)?)?;
        for (bi, &rho) in densities.iter().enumerate() {
            let (g, rho_hat) = draw_subsets(lat, fam, &alpha, rho, &mut rng)?;
            if rho_hat == 0.0 {
                skipped += 1;
                continue;
            }
            let ratio = space.norm(&g)? / full;
            mono.record(ratio, ratio <= 1.0 + 1e-12);
            pts.push((rho_hat.ln(), ratio.ln()));
            let b = &mut bins[bi];
            b.0 += 1;
            b.1 = b.1.max(ratio);
            b.2 += rho_hat;
        }
    }
    let mut rep = ProbeReport::new("sparse_density");
    rep.provenance.seed = Some(seed);
    rep.provenance.family_hash = Some(family_hash(families));
    rep.columns(&["rho", "count", "worst_ratio", "mean_rho_hat"]);
    for (&rho, b) in densities.iter().zip(&bins) {
        let mean = if b.0 > 0 { b.2 / b.0 as f64 } else { 0.0 };
        rep.row(vec![json!(rho), json!(b.0), json!(b.1), json!(mean)]);
    }
    if pts.len() >= 2 {
        let (slope, icpt, r2) = fit_line(&pts);
        let c_env = pts.iter().map(|(x, y)| y - slope * x).fold(f64::NEG_INFINITY, f64::max).exp();
        rep.metric("delta_hat", slope).metric("c_hat", icpt.exp()).metric("c_envelope", c_env).metric("r_squared", r2);
    } else {
        rep.note("fewer than two usable points; no fit");
    }
    rep.metric("points", pts.len() as f64).metric("skipped", skipped as f64).push_check(&mono);
    rep.note(format!("no violation found in {trials} trials; sampling cannot certify the condition"));
    Ok(rep)
}

/// The modular form: `sum_Q int_{G_Q} (alpha_Q w)^p` with
/// `||sum alpha_Q chi_Q||_X = 1`, against the realized density, with
/// per-stratum bookkeeping `S_k = {2^-k <= alpha_Q < 2^{-k+1}}`.
pub fn sparse_modular_probe(
    space: &SpaceSpec,
    families: &[DensityFamily],
    densities: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let lat = space.lattice();
    let mut rng = stream(seed, "sparse_modular");
    let mut pts = Vec::new();
    let mut norm = Tally::hard("normalized");
    let (mut big_max, mut small_max) = (0.0f64, 0.0f64);
    let (mut strata_max, mut maximal_max) = (0usize, 0usize);
    for trial in 0..trials {
        let fam = &families[trial % families.len()];
        let raw: Vec<f64> = fam.cubes.iter().map(|_| (rng.gen_range(-6.0..2.0f64)).exp2()).collect();
        let nrm = space.norm(&sparse_sum(lat, &fam.cubes, &raw)?)?;
        let alpha: Vec<f64> = raw.iter().map(|a| a / nrm).collect();
        let again = space.norm(&sparse_sum(lat, &fam.cubes, &alpha)?)?;
        norm.record((again - 1.0).abs(), (again - 1.0).abs() <= 1e-9);
        // strata and their maximal cubes
        let mut strata: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, &a) in alpha.iter().enumerate() {
            if a < 1.0 {
                strata.entry((-a.log2()).floor() as i32 + 1).or_default().push(i);
            }
        }
        let maximal: usize = strata
            .values()
            .map(|ids| {
                ids.iter()
                    .filter(|&&i| {
                        !ids.iter().any(|&j| {
                            j != i && fam.cubes[j].contains_rect(&fam.cubes[i]) && fam.cubes[j] != fam.cubes[i]
                        })
                    })
                    .count()
            })
            .sum();
        strata_max = strata_max.max(strata.len());
        maximal_max = maximal_max.max(maximal);
        for &rho in densities {
            let (g, rho_hat) = draw_subsets(lat, fam, &alpha, rho, &mut rng)?;
            if rho_hat == 0.0 {
                continue;
            }
            let gw = g.zip_map(space.w.field(), |a, b| a * b)?;
            let lhs = modular(&gw, &space.p, None)?;
            // split by alpha >= 1 versus the strata
            let mut hi_part = vec![0.0; lat.len()];
            for (c, v) in g.values().iter().enumerate() {
                if *v >= 1.0 {
                    hi_part[c] = gw.values()[c];
                }
            }
            let hi_mod = modular(&LatticeFunction::new(lat, hi_part)?, &space.p, None)?;
            big_max = big_max.max(hi_mod);
            small_max = small_max.max(lhs - hi_mod);
            if lhs > 0.0 {
                pts.push((rho_hat.ln(), lhs.ln()));
            }
        }
    }
    let mut rep = ProbeReport::new("sparse_modular");
    rep.provenance.seed = Some(seed);
    if pts.len() >= 2 {
        let (slope, icpt, r2) = fit_line(&pts);
        let c_env = pts.iter().map(|(x, y)| y - slope * x).fold(f64::NEG_INFINITY, f64::max).exp();
        rep.metric("delta_hat", slope).metric("c_hat", icpt.exp()).metric("c_envelope", c_env).metric("r_squared", r2);
    }
    rep.metric("points", pts.len() as f64)
        .metric("max_strata", strata_max as f64)
        .metric("max_maximal_cubes", maximal_max as f64)
        .metric("max_part_alpha_ge_1", big_max)
        .metric("max_part_alpha_lt_1", small_max)
        .push_check(&norm);
    Ok(rep)
}

/// Mixed density families at resolution `lat`: sparse families of random
/// functions on the standard grid plus dyadic chains.
pub fn density_families(lat: Lattice, eta: f64, count: usize, seed: u64) -> Result<Vec<DensityFamily>> {
    let mut rng = stream(seed, "density_families");
    let mut out = Vec::new();
    for i in 0..count {
        if i % 4 == 3 {
            out.push(DensityFamily::chain(lat, lat.m.min(6)));
            continue;
        }
        let f = random_support_function(lat, &mut rng);
        let (fam, _) = sparse_from_maximal(&f, ShiftedGrid::standard(lat.n), eta)?;
        let d = DensityFamily::from_sparse(&fam, lat);
        if !d.cubes.is_empty() {
            out.push(d);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityOptions {
    /// Stable means finest estimate `<= stability *` the previous one.
    pub stability: f64,
    pub density_trials: usize,
    pub families: usize,
    pub seed: u64,
    /// Resolution for the density probes (capped by the finest resolution).
    pub probe_m: u32,
}

impl Default for DualityOptions {
    fn default() -> Self {
        DualityOptions { stability: 1.5, density_trials: 40, families: 8, seed: 0, probe_m: 8 }
    }
}

pub const VERDICT_CONSISTENT: &str = "consistent: both estimates stable in m";
pub const VERDICT_HYPOTHESIS_FAILS: &str = "hypothesis fails: X estimate grows with m, no duality claim";
pub const VERDICT_INCONSISTENT: &str = "inconsistent: X stable but X' grows";

/// Empirical `||M||` on `X` and `X'` across resolutions, density probes on
/// `X`, and a verdict. Trend measurements only.
pub fn duality_experiment(
    preset: &SpacePreset,
    n: usize,
    resolutions: &[u32],
    candidates: &CandidateFamily,
    opts: &DualityOptions,
) -> Result<ProbeReport> {
    if resolutions.len() < 2 {
        return Err(Error::InvalidParameter("need at least two resolutions".into()));
    }
    let mut rep = ProbeReport::new("duality");
    rep.provenance.seed = Some(opts.seed);
    rep.provenance.n = Some(n);
    rep.provenance.presets.insert("space".into(), preset.name.clone());
    rep.provenance.presets.insert("exponent".into(), preset.exponent.to_string());
    rep.provenance.presets.insert("weight".into(), preset.weight.to_string());
    rep.columns(&["m", "x_norm", "x_argmax", "dual_norm", "dual_argmax"]);
    let mut xs = Vec::new();
    let mut ds = Vec::new();
    for &m in resolutions {
        let space = SpaceSpec::from_preset(preset, Lattice::new(n, m)?)?;
        let dual = space.associate();
        let x = operator_norm_lower_bound(&MaximalKind::Full, &space.p, &space.w, candidates)?;
        let d = operator_norm_lower_bound(&MaximalKind::Full, &dual.p, &dual.w, candidates)?;
        rep.row(vec![json!(m), json!(x.value), json!(x.argmax), json!(d.value), json!(d.argmax)]);
        rep.metric(&format!("x_norm(m={m})"), x.value).metric(&format!("dual_norm(m={m})"), d.value);
        xs.push(x.value);
        ds.push(d.value);
    }
    let last = xs.len() - 1;
    let x_step = xs[last] / xs[last - 1];
    let d_step = ds[last] / ds[last - 1];
    let x_stable = x_step <= opts.stability;
    let d_stable = d_step <= opts.stability;
    rep.metric("x_step_ratio", x_step)
        .metric("dual_step_ratio", d_step)
        .metric("x_total_growth", xs[last] / xs[0])
        .metric("dual_total_growth", ds[last] / ds[0])
        .metric("stability_threshold", opts.stability);
    let trend = |s: bool| if s { "stable" } else { "growing" };
    rep.label("x_trend", trend(x_stable)).label("dual_trend", trend(d_stable));
    let verdict = if !x_stable {
        VERDICT_HYPOTHESIS_FAILS
    } else if d_stable {
        VERDICT_CONSISTENT
    } else {
        VERDICT_INCONSISTENT
    };
    rep.label("verdict", verdict);
    let mut xs_t = Tally::soft("x_stable");
    xs_t.record(x_step, x_stable);
    let mut ds_t = Tally::soft("dual_stable");
    ds_t.record(d_step, d_stable);
    rep.push_check(&xs_t).push_check(&ds_t);

    let pm = opts.probe_m.min(*resolutions.iter().max().expect("nonempty"));
    let lat = Lattice::new(n, pm)?;
    let space = SpaceSpec::from_preset(preset, lat)?;
    let fam = CubeFamily::build(CubeFamilySpec::AllLatticeAligned { m: pm.min(if n == 1 { 6 } else { 4 }) }, n)?;
    let ai = ainfty_absolute_continuity_check(&space.density()?, &fam, 4000, opts.seed)?;
    for key in ["fitted_exponent", "lower_envelope_exponent", "envelope_c"] {
        if let Some(v) = ai.metrics.get(key) {
            rep.metric(&format!("density_ainfty_{key}"), *v);
        }
    }
    let dfs = density_families(lat, 0.5, opts.families, opts.seed)?;
    let dens = sparse_density_probe(&space, &dfs, &DEFAULT_DENSITIES, opts.density_trials, opts.seed)?;
    let modp = sparse_modular_probe(&space, &dfs, &DEFAULT_DENSITIES, opts.density_trials, opts.seed)?;
    for (prefix, r) in [("density", &dens), ("modular", &modp)] {
        for (k, v) in &r.metrics {
            rep.metric(&format!("{prefix}_{k}"), *v);
        }
        for ch in &r.checks {
            let mut c = ch.clone();
            c.name = format!("{prefix}_{}", c.name);
            rep.checks.push(c);
        }
    }
    rep.metric("probe_m", pm as f64);
    rep.note("trend check, not a reproduction: boundedness is qualitative and the estimates are lower bounds");
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_space(n: usize, m: u32, q: f64) -> SpaceSpec {
        let lat = Lattice::new(n, m).unwrap();
        SpaceSpec::new(ExponentField::constant(lat, q).unwrap(), WeightField::constant(lat, 1.0).unwrap()).unwrap()
    }

    fn affine_space(m: u32) -> SpaceSpec {
        let lat = Lattice::new(1, m).unwrap();
        SpaceSpec::new(
            ExponentField::from_fn(lat, |x| 2.0 + x[0].clamp(0.0, 1.0)).unwrap(),
            WeightField::constant(lat, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn profile_matches_varlp() {
        let sp = affine_space(8);
        let q = Rect::interval(0.25, 0.75);
        let prof = CubeProfile::new(&sp, q).unwrap();
        let f = LatticeFunction::indicator(sp.lattice(), &q, 1.0).unwrap();
        let nrm = sp.norm(&f).unwrap();
        assert!((prof.char_norm() - nrm).abs() <= 1e-10 * nrm);
        let t = 1.7;
        let direct = modular(&f.scale(t).unwrap(), &sp.p, None).unwrap();
        assert!((prof.modular(t) - direct).abs() <= 1e-12 * direct);
    }

    /// Single cube, constant exponent: the constraint forces `t = |Q|^{-1/q}`
    /// and the conclusion sum equals 1.
    #[test]
    fn single_cube_constant_exponent_sum_is_one() {
        let sp = const_space(1, 8, 3.0);
        let prof = CubeProfile::new(&sp, Rect::interval(0.0, 0.25)).unwrap();
        let t = prof.t_max();
        assert!((t - 0.25f64.powf(-1.0 / 3.0)).abs() < 1e-12 * t);
        for r in [1.1, 1.5, 2.0] {
            assert!((prof.rh_mass(t, r) - 1.0).abs() < 1e-12);
        }
        let rep = disjoint_family_rh_probe(&sp, &[1.1, 1.25], 50, 2).unwrap();
        assert!(rep.passed());
        // constants give equality in Jensen: every family sums to exactly 1
        assert!((rep.metrics["c_hat(1.1)"] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_exponent_tq_all_or_nothing() {
        let sp = const_space(1, 8, 2.0);
        let prof = CubeProfile::new(&sp, Rect::interval(0.0, 0.5)).unwrap();
        // G is identically 1/k
        let c = LemmaConstants::from_parts(1.25, 1.0, 1.5, 2.0, 2.0, 2.0).unwrap();
        assert_eq!(compute_tq_bq(&prof, &c).unwrap().t_q, 0.0);
        let tb = compute_tq_bq(&prof, &c.clone().with_k(0.5)).unwrap();
        assert_eq!(tb.t_q, prof.t_max());
        let huge = compute_tq_bq(&prof, &c.with_k(1e6)).unwrap();
        assert_eq!((huge.t_q, huge.b_q), (0.0, 0.0));
    }

    /// Oracle: a 10x finer plain scan for the largest `t` with `G(t) > 1`.
    #[test]
    fn variable_exponent_tq_against_fine_scan() {
        let sp = affine_space(8);
        let prof = CubeProfile::new(&sp, Rect::interval(0.0, 1.0)).unwrap();
        let base = LemmaConstants::from_parts(1.25, 1.0, 1.5, 2.0, 2.0, 3.0).unwrap();
        // pick k so the crossing sits inside (0, t_max)
        let g = |t: f64, k: f64| prof.rh_mass(t, 1.25) / (k * prof.modular(t));
        let k = 0.5 * (g(prof.t_max(), 1.0) + g(prof.t_max() * 1e-6, 1.0));
        let c = base.with_k(k);
        let tb = compute_tq_bq(&prof, &c).unwrap();
        assert!(tb.t_q > 0.0 && tb.t_q < prof.t_max());
        assert!(tb.modular_at_tq < 1.0 && tb.qleft_residual <= 1e-6);
        let pts = 10 * tb.grid_points;
        let span = -SCAN_DEPTH.ln();
        let oracle = (0..pts)
            .map(|j| prof.t_max() * (-span * j as f64 / (pts - 1) as f64).exp())
            .find(|&t| g(t, k) > 1.0)
            .unwrap();
        let step = (span / (pts - 1) as f64).exp();
        assert!(tb.t_q >= oracle / (1.0 + 1e-9) && tb.t_q <= oracle * step * (1.0 + 1e-9), "{} vs {}", tb.t_q, oracle);
    }

    #[test]
    fn truncation_and_key_checks_pass() {
        let sp = affine_space(8);
        let (c, crep) =
            LemmaConstants::derive(&sp, &ConstantOverrides { trials: Some(60), ..Default::default() }, 1).unwrap();
        assert!(crep.metrics["eps"] > 0.0 && c.gamma > 1.0 && c.gamma < c.r.min(c.nu));
        let fams = random_disjoint_families(1, 6, 20, 3);
        let rep = truncation_bound_check(&sp, &c, &fams, 300, 3).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        let key = key_rh_bound_check(&sp, &c, &fams[..4], 16).unwrap();
        assert!(key.passed(), "{:?}", key.failures());
        assert!(key.metrics["c_tilde"].is_finite());
    }

    #[test]
    fn scale_window_constant_is_one_and_median_oracle() {
        let sp = const_space(1, 8, 3.0);
        let c = LemmaConstants::from_parts(1.25, 2.0, 1.5, 2.0, 3.0, 3.0).unwrap();
        let cubes: Vec<Rect> = random_disjoint_families(1, 5, 3, 1).concat();
        let rep = scale_window_rh_check(&sp, &c, &cubes).unwrap();
        assert!((rep.metrics["c_hat"] - 1.0).abs() < 1e-12);

        let sp = affine_space(8);
        let prof = CubeProfile::new(&sp, Rect::interval(0.0, 1.0)).unwrap();
        let (med, e1, e2) = prof.lower_median();
        // sort-based oracle over the 256 cells of [0,1)
        let lat = sp.lattice();
        let mut ps: Vec<f64> = lat.cells_within(&Rect::interval(0.0, 1.0)).iter().map(|&c| sp.p.values()[c]).collect();
        ps.sort_by(f64::total_cmp);
        assert_eq!(med, ps[ps.len() / 2 - 1]);
        assert!((med - 2.5).abs() < 0.01);
        assert!(e1 >= 0.5 && e2 >= 0.5);
    }

    #[test]
    fn single_cube_density_slope_is_reciprocal_exponent() {
        for q in [2.0, 3.0, 4.0] {
            let sp = const_space(1, 8, q);
            let fam = DensityFamily::single(sp.lattice(), Rect::interval(0.0, 1.0));
            let rep = sparse_density_probe(&sp, &[fam], &DEFAULT_DENSITIES, 4, 9).unwrap();
            assert!((rep.metrics["delta_hat"] - 1.0 / q).abs() < 1e-9, "{q}: {}", rep.metrics["delta_hat"]);
        }
    }

    #[test]
    fn density_probe_on_sparse_families() {
        let sp = const_space(1, 8, 2.0);
        let fams = density_families(sp.lattice(), 0.5, 6, 4).unwrap();
        let rep = sparse_density_probe(&sp, &fams, &DEFAULT_DENSITIES, 12, 4).unwrap();
        assert!(rep.passed());
        assert!(rep.metrics["delta_hat"] > 0.0);
        let modp = sparse_modular_probe(&sp, &fams, &DEFAULT_DENSITIES, 12, 4).unwrap();
        assert!(modp.passed());
    }
}
