//! Muckenhoupt-type quantities over explicit cube families, reverse Hölder
//! and absolute-continuity probes, the Rubio de Francia iteration and the
//! variable `A_p` constant.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::lattice::{Cube, GridCube, LatticeFunction, PrefixIntegral, Rect, ShiftedGrid};
use crate::maximal::{maximal, MaximalKind};
use crate::report::{family_hash, ProbeReport, Tally};
use crate::rng::stream;
use crate::varlp::{luxemburg_norm_on, ExponentField, WeightField};
use crate::{Error, Result};

/// A finite stand-in for "all cubes", inside the support box `[0,1)^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CubeFamilySpec {
    /// Every cube with corners and side on the `2^-m` lattice.
    AllLatticeAligned { m: u32 },
    /// Cubes of one shifted grid at levels `0..=max_level`.
    GridCubes { grid: ShiftedGrid, max_level: i32 },
    /// Random cubes with log-uniform sides in `[2^-10, 1]`.
    RandomCubes { seed: u64, count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub spec: CubeFamilySpec,
    pub n: usize,
    pub cubes: Vec<Cube>,
}

impl CubeFamily {
    pub fn build(spec: CubeFamilySpec, n: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let mut cubes = Vec::new();
        match &spec {
            CubeFamilySpec::AllLatticeAligned { m } => {
                let k = 1usize << m;
                let h = 1.0 / k as f64;
                for t in 1..=k {
                    for i0 in 0..=k - t {
                        let i1_range = if n == 2 { 0..=k - t } else { 0..=0 };
                        for i1 in i1_range {
                            cubes.push(Cube::new(n, [i0 as f64 * h, i1 as f64 * h], t as f64 * h));
                        }
                    }
                }
            }
            CubeFamilySpec::GridCubes { grid, max_level } => {
                if grid.n != n {
                    return Err(Error::LatticeMismatch("grid dimension".into()));
                }
                let support = Rect::support_box(n);
                for level in 0..=*max_level {
                    let span = 1i64 << level;
                    let j1 = if n == 2 { -1..=span } else { 0..=0 };
                    for a in -1..=span {
                        for b in j1.clone() {
                            let c = GridCube { grid: *grid, level, index: [a, b] };
                            if support.contains_rect(&c.rect()) {
                                cubes.push(c.cube());
                            }
                        }
                    }
                }
            }
            CubeFamilySpec::RandomCubes { seed, count } => {
                let mut rng = stream(*seed, "random_cubes");
                for _ in 0..*count {
                    let side = (-10.0 * rng.gen::<f64>()).exp2();
                    let mut corner = [0.0; 2];
                    for c in corner.iter_mut().take(n) {
                        *c = rng.gen::<f64>() * (1.0 - side);
                    }
                    cubes.push(Cube::new(n, corner, side));
                }
            }
        }
        if cubes.is_empty() {
            return Err(Error::InvalidParameter("empty cube family".into()));
        }
        Ok(CubeFamily { spec, n, cubes })
    }

    pub fn hash(&self) -> String {
        family_hash(&self.cubes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMax {
    pub value: f64,
    /// First cube in family order attaining the max.
    pub argmax: usize,
}

fn family_max(values: impl IndexedParallelIterator<Item = f64>) -> FamilyMax {
    let vals: Vec<f64> = values.collect();
    let mut best = FamilyMax { value: f64::NEG_INFINITY, argmax: 0 };
    for (i, v) in vals.into_iter().enumerate() {
        if v > best.value || v.is_nan() {
            best = FamilyMax { value: v, argmax: i };
        }
    }
    best
}

/// `sup_Q (avg_Q v) (avg_Q v^{-1/(p-1)})^{p-1}` over the family.
pub fn ap_constant(v: &LatticeFunction, p: f64, fam: &CubeFamily) -> Result<FamilyMax> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("A_p needs p > 1, got {p}")));
    }
    let lat = v.lattice();
    if lat.n != fam.n {
        return Err(Error::LatticeMismatch("cube family dimension".into()));
    }
    if !v.is_nonnegative() || lat.cells_with_center_in(&Rect::support_box(lat.n)).iter().any(|&i| v.values()[i] <= 0.0)
    {
        return Err(Error::InvalidWeight("A_p weight must be positive on the support box".into()));
    }
    let dual = v.map(|x| if x > 0.0 { x.powf(-1.0 / (p - 1.0)) } else { 0.0 })?;
    let (pv, pd) = (PrefixIntegral::new(v), PrefixIntegral::new(&dual));
    let best = family_max(fam.cubes.par_iter().map(|q| {
        let r = q.rect();
        pv.average(&r) * pd.average(&r).powf(p - 1.0)
    }));
    if !best.value.is_finite() {
        return Err(Error::NonFinite("A_p product".into()));
    }
    Ok(best)
}

/// `c(r) = max_Q (avg_Q v^r)^{1/r} / avg_Q v` for each `r`.
pub fn reverse_holder_probe(v: &LatticeFunction, fam: &CubeFamily, r_grid: &[f64]) -> Result<ProbeReport> {
    let mut rep = ProbeReport::new("reverse_holder");
    rep.columns(&["r", "c"]);
    rep.provenance.family_hash = Some(fam.hash());
    let pv = PrefixIntegral::new(v);
    let mut mono = Tally::hard("nondecreasing");
    let mut prev: Option<f64> = None;
    for &r in r_grid {
        if !(r >= 1.0) {
            return Err(Error::InvalidParameter(format!("reverse Hoelder exponent {r} < 1")));
        }
        let vr = if r == 1.0 { v.clone() } else { v.map(|x| x.powf(r))? };
        if vr.values().iter().any(|x| !x.is_finite()) {
            rep.note(format!("overflow at r = {r}; remaining exponents skipped"));
            rep.label("overflow", format!("{r}"));
            break;
        }
        let pr = if r == 1.0 { pv.clone() } else { PrefixIntegral::new(&vr) };
        let c = family_max(fam.cubes.par_iter().map(|q| {
            let rect = q.rect();
            pr.average(&rect).powf(1.0 / r) / pv.average(&rect)
        }))
        .value;
        if !c.is_finite() {
            rep.note(format!("non-finite ratio at r = {r}; remaining exponents skipped"));
            rep.label("overflow", format!("{r}"));
            break;
        }
        if let Some(p) = prev {
            mono.leq(p, c, 1e-12, 0.0);
        }
        prev = Some(c);
        rep.metric(&format!("c({r})"), c);
        rep.row(vec![json!(r), json!(c)]);
    }
    rep.push_check(&mono);
    Ok(rep)
}

/// A sampled pair `(Q, E)` with `E` a sub-box of `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeSubset {
    pub cube: usize,
    pub subset: Rect,
}

/// Draws `count` pairs: cubes uniformly from the family, `E` a random
/// sub-box with log-uniform relative side per axis (the first pair of each
/// cube index drawn is `E = Q`).
pub fn sample_subsets(fam: &CubeFamily, count: usize, seed: u64) -> Vec<CubeSubset> {
    let mut rng = stream(seed, "cube_subsets");
    (0..count)
        .map(|i| {
            let qi = rng.gen_range(0..fam.cubes.len());
            let q = fam.cubes[qi];
            if i % 16 == 0 {
                return CubeSubset { cube: qi, subset: q.rect() };
            }
            let mut lo = [0.0; 2];
            let mut hi = [0.0; 2];
            for a in 0..fam.n {
                let frac = (-8.0 * rng.gen::<f64>()).exp2();
                let len = frac * q.side;
                lo[a] = q.corner[a] + rng.gen::<f64>() * (q.side - len);
                hi[a] = (lo[a] + len).min(q.corner[a] + q.side);
            }
            CubeSubset { cube: qi, subset: Rect::new(fam.n, lo, hi) }
        })
        .collect()
}

/// Fits `w(E)/w(Q) <= c (|E|/|Q|)^delta` by least squares in log-log plus the
/// smallest `c` for the fitted slope; also the lower envelope exponent
/// `s = max log(w(E)/w(Q)) / log(|E|/|Q|)` (so `w(E)/w(Q) >= (|E|/|Q|)^s`).
pub fn ainfty_absolute_continuity_check(
    v: &LatticeFunction,
    fam: &CubeFamily,
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let pv = PrefixIntegral::new(v);
    let pairs = sample_subsets(fam, samples, seed);
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|s| {
            let q = fam.cubes[s.cube].rect();
            (s.subset.volume() / q.volume(), pv.integrate(&s.subset) / pv.integrate(&q))
        })
        .collect();
    let logs: Vec<(f64, f64)> =
        pts.iter().filter(|(x, y)| *x < 1.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let mut rep = ProbeReport::new("ainfty_absolute_continuity");
    rep.provenance.seed = Some(seed);
    rep.provenance.family_hash = Some(fam.hash());
    let mut at_one = Tally::hard("full_subset_ratio_one");
    for (x, y) in &pts {
        if *x == 1.0 {
            at_one.record((y - 1.0).abs(), (y - 1.0).abs() < 1e-12);
        }
    }
    rep.push_check(&at_one);
    if logs.len() < 2 {
        rep.note("not enough proper subsets for a fit");
        return Ok(rep);
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let delta = slope.clamp(f64::MIN_POSITIVE, 1.0);
    let log_c = logs.iter().map(|(x, y)| y - delta * x).fold(f64::NEG_INFINITY, f64::max);
    let worst_residual = logs.iter().map(|(x, y)| y - (my + slope * (x - mx))).fold(f64::NEG_INFINITY, f64::max);
    let s_lower = logs.iter().filter(|(x, _)| *x < -1e-9).map(|(x, y)| y / x).fold(0.0, f64::max);
    rep.metric("fitted_exponent", delta)
        .metric("ols_slope", slope)
        .metric("envelope_c", log_c.exp())
        .metric("worst_residual", worst_residual)
        .metric("lower_envelope_exponent", s_lower)
        .metric("pairs", pts.len() as f64);
    rep.note("fitted constants describe the sample; they are not optimal constants");
    Ok(rep)
}

/// `w(Q)/w(E) <= (|Q|/|E|)^p [w]_{A_p}` on sampled pairs, with `[w]_{A_p}`
/// taken over the same family the cubes are drawn from.
pub fn converse_check(v: &LatticeFunction, p: f64, fam: &CubeFamily, samples: usize, seed: u64) -> Result<ProbeReport> {
    let ap = ap_constant(v, p, fam)?;
    let pv = PrefixIntegral::new(v);
    let mut t = Tally::hard("converse");
    for s in sample_subsets(fam, samples, seed) {
        let q = fam.cubes[s.cube].rect();
        let e = s.subset.volume();
        if e <= 0.0 {
            continue;
        }
        let lhs = pv.integrate(&q) / pv.integrate(&s.subset);
        let rhs = (q.volume() / e).powf(p) * ap.value;
        t.leq(lhs, rhs, 1e-10, 0.0);
    }
    let mut rep = ProbeReport::new("ap_converse");
    rep.metric("ap_constant", ap.value).push_check(&t);
    rep.provenance.seed = Some(seed);
    rep.provenance.family_hash = Some(fam.hash());
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdfResult {
    pub rg: LatticeFunction,
    /// Sup norms of the terms `M^k g / (2A)^k`.
    pub term_sup: Vec<f64>,
    pub ratio: Option<f64>,
    /// `||last term|| / (1 - ratio)` when `ratio < 1`.
    pub tail_bound: Option<f64>,
    pub divergent: bool,
}

/// `R g = sum_{k<N} M^k g / (2A)^k`.
pub fn rubio_de_francia(g: &LatticeFunction, kind: &MaximalKind, a: f64, terms: usize) -> Result<RdfResult> {
    if !(a > 0.0) || terms == 0 {
        return Err(Error::InvalidParameter("need A > 0 and at least one term".into()));
    }
    if !g.is_nonnegative() {
        return Err(Error::Precondition("Rubio de Francia needs g >= 0".into()));
    }
    let sup = |f: &LatticeFunction| f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut acc = g.clone();
    let mut term = g.clone();
    let mut term_sup = vec![sup(g)];
    for _ in 1..terms {
        term = maximal(&term, kind)?.scale(1.0 / (2.0 * a))?;
        term_sup.push(sup(&term));
        acc = acc.zip_map(&term, |x, y| x + y)?;
    }
    let (ratio, tail_bound, divergent) = if term_sup.len() >= 2 {
        let (a1, a2) = (term_sup[term_sup.len() - 2], term_sup[term_sup.len() - 1]);
        let r = if a1 > 0.0 { a2 / a1 } else { 0.0 };
        if r < 1.0 {
            (Some(r), Some(a2 / (1.0 - r)), false)
        } else {
            (Some(r), None, true)
        }
    } else {
        (None, None, false)
    };
    Ok(RdfResult { rg: acc, term_sup, ratio, tail_bound, divergent })
}

/// `max_x M v(x) / v(x)`, over cells where `v > 0` or `M v > 0`.
pub fn a1_ratio(v: &LatticeFunction, kind: &MaximalKind) -> Result<f64> {
    let mv = maximal(v, kind)?;
    Ok(mv.values().iter().zip(v.values()).fold(0.0, |best: f64, (m, x)| {
        if *m == 0.0 {
            best
        } else if *x <= 0.0 {
            f64::INFINITY
        } else {
            best.max(m / x)
        }
    }))
}

/// `sup_Q |Q|^{-1} ||chi_Q||_{L^p_w} ||chi_Q||_{L^{p'}_{w^{-1}}}`.
pub fn apvar_constant(p: &ExponentField, w: &WeightField, fam: &CubeFamily) -> Result<FamilyMax> {
    let pc = p.conjugate();
    let wi = w.inverse();
    let vals: Vec<Result<f64>> = fam
        .cubes
        .par_iter()
        .map(|q| {
            let r = q.rect();
            let a = luxemburg_norm_on(w.field(), p, Some(&r))?;
            let b = luxemburg_norm_on(wi.field(), &pc, Some(&r))?;
            Ok(a * b / r.volume())
        })
        .collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(family_max(vals.into_par_iter()))
}
