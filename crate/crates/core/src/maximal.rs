//! Maximal operators on lattice functions and empirical operator norms.
//!
//! * `Full`: sup of `|f|`-averages over lattice-aligned cubes of side `t h`
//!   containing the cell center, `t = 1..=3 2^m`.
//! * `Grid`: sup over cubes of one shifted dyadic grid (levels `TOP_LEVEL..=m`).
//! * `LocalDyadic`: sup over the dyadic subcubes of a fixed cube `Q0`.

use std::collections::VecDeque;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::tree::DyadicTree;
use crate::lattice::{build_shifted_grids, Cube, Lattice, LatticeFunction, Rect, ShiftedGrid};
use crate::report::{ProbeReport, Tally};
use crate::rng::{random_support_function, stream};
use crate::varlp::{weighted_norm, ExponentField, WeightField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MaximalKind {
    Full,
    Grid(ShiftedGrid),
    LocalDyadic(Cube),
}

pub fn maximal(f: &LatticeFunction, kind: &MaximalKind) -> Result<LatticeFunction> {
    let lat = f.lattice();
    let values = match kind {
        MaximalKind::Full => full_maximal(f),
        MaximalKind::Grid(g) => {
            if g.n != lat.n {
                return Err(Error::LatticeMismatch(format!("grid dimension {} vs lattice {}", g.n, lat.n)));
            }
            DyadicTree::grid(f, *g).maximal()
        }
        MaximalKind::LocalDyadic(q0) => {
            if q0.n != lat.n || !Rect::computational_box(lat.n).contains_rect(&q0.rect()) {
                return Err(Error::InvalidParameter(format!("local cube {q0:?} outside the computational box")));
            }
            DyadicTree::local(f, *q0).maximal()
        }
    };
    LatticeFunction::new(lat, values)
}

/// For nondecreasing windows `[lo(i), hi(i)]`, the max of `vals` over each.
fn sliding_max(vals: &[f64], out_len: usize, t: usize, out: &mut [f64]) {
    let last_start = vals.len() - 1;
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for (i, o) in out.iter_mut().enumerate().take(out_len) {
        let lo = (i + 1).saturating_sub(t);
        let hi = i.min(last_start);
        while next <= hi {
            while dq.back().is_some_and(|&b| vals[b] <= vals[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&b| b < lo) {
            dq.pop_front();
        }
        let m = vals[*dq.front().expect("window is nonempty")];
        if m > *o {
            *o = m;
        }
    }
}

fn full_maximal(f: &LatticeFunction) -> Vec<f64> {
    let a: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    // |f(x)| stands in for cubes below cell size; it also absorbs the rounding
    // of prefix differences at t = 1
    window_maximal(f).into_iter().zip(&a).map(|(m, v)| m.max(*v)).collect()
}

fn window_maximal(f: &LatticeFunction) -> Vec<f64> {
    let lat = f.lattice();
    let k = lat.per_axis();
    let a: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    if lat.n == 1 {
        return interval_maximal(&a);
    }
    let w = k + 1;
    let mut s = vec![0.0; w * w];
    for i in 0..k {
        let mut row = 0.0;
        for j in 0..k {
            row += a[i * k + j];
            s[(i + 1) * w + j + 1] = s[i * w + j + 1] + row;
        }
    }
    (1..=k)
        .into_par_iter()
        .fold(
            || vec![0.0; k * k],
            |mut acc, t| {
                let np = k - t + 1;
                let area = (t * t) as f64;
                // row pass: for each window row s0, max over s1 windows per cell column
                let mut rows = vec![0.0; np * k];
                let mut avgs = vec![0.0; np];
                for s0 in 0..np {
                    for (s1, v) in avgs.iter_mut().enumerate() {
                        let sum = s[(s0 + t) * w + s1 + t] - s[s0 * w + s1 + t] - s[(s0 + t) * w + s1] + s[s0 * w + s1];
                        *v = sum / area;
                    }
                    sliding_max(&avgs, k, t, &mut rows[s0 * k..(s0 + 1) * k]);
                }
                let mut col = vec![0.0; np];
                let mut colmax = vec![0.0; k];
                for i1 in 0..k {
                    for (s0, c) in col.iter_mut().enumerate() {
                        *c = rows[s0 * k + i1];
                    }
                    colmax.iter_mut().for_each(|v| *v = 0.0);
                    sliding_max(&col, k, t, &mut colmax);
                    for i0 in 0..k {
                        let v = &mut acc[i0 * k + i1];
                        if colmax[i0] > *v {
                            *v = colmax[i0];
                        }
                    }
                }
                acc
            },
        )
        .reduce(|| vec![0.0; k * k], |x, y| x.iter().zip(&y).map(|(p, q)| p.max(*q)).collect())
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn slope(a: Pt, b: Pt) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

/// Monotone-chain hull of points sorted by `x`; `upper` keeps clockwise turns.
fn hull(pts: impl Iterator<Item = Pt>, upper: bool) -> Vec<Pt> {
    let mut h: Vec<Pt> = Vec::new();
    for p in pts {
        while h.len() >= 2 {
            let c = cross(h[h.len() - 2], h[h.len() - 1], p);
            if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// Max of `val(j)` over a sequence that increases then decreases.
fn unimodal_max(len: usize, val: impl Fn(usize) -> f64) -> f64 {
    let (mut lo, mut hi) = (0usize, len - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if val(mid + 1) >= val(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    // neighbours absorb rounding in the hull and the comparisons
    (lo.saturating_sub(1)..=(lo + 1).min(len - 1)).map(val).fold(f64::NEG_INFINITY, f64::max)
}

/// Exact 1D `sup` over all lattice intervals containing each cell, by divide
/// and conquer on the split cell: intervals crossing the midpoint are
/// maximized with tangent queries against convex hulls of the prefix sums.
fn interval_maximal(a: &[f64]) -> Vec<f64> {
    let k = a.len();
    let mut s = vec![0.0; k + 1];
    for i in 0..k {
        s[i + 1] = s[i] + a[i];
    }
    let pt = |i: usize| (i as f64, s[i]);
    let mut out = a.to_vec();
    let mut stack = vec![(0usize, k)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let mid = (lo + hi) / 2;
        // crossing intervals [x, y) with lo <= x < mid < y <= hi
        let upper = hull((mid + 1..=hi).map(pt), true);
        let lower = hull((lo..mid).map(pt), false);
        let mut run = f64::NEG_INFINITY;
        for x in lo..mid {
            let q = pt(x);
            run = run.max(unimodal_max(upper.len(), |j| slope(q, upper[j])));
            out[x] = out[x].max(run);
        }
        let mut run = f64::NEG_INFINITY;
        for y in (mid + 1..=hi).rev() {
            let q = pt(y);
            run = run.max(unimodal_max(lower.len(), |j| slope(lower[j], q)));
            out[y - 1] = out[y - 1].max(run);
        }
        stack.push((lo, mid));
        stack.push((mid, hi));
    }
    out
}

/// Cellwise comparison `Mf <= 6^n sum_a M^{D_a} f`.
pub fn check_grid_comparison(f: &LatticeFunction) -> Result<ProbeReport> {
    let lat = f.lattice();
    let lhs = maximal(f, &MaximalKind::Full)?;
    let mut rhs = vec![0.0; lat.len()];
    for g in build_shifted_grids(lat.n)? {
        let mg = maximal(f, &MaximalKind::Grid(g))?;
        for (r, v) in rhs.iter_mut().zip(mg.values()) {
            *r += v;
        }
    }
    let factor = 6f64.powi(lat.n as i32);
    let mut t = Tally::hard("pointwise");
    for (l, r) in lhs.values().iter().zip(&rhs) {
        t.leq(*l, factor * r, 1e-12, 1e-300);
    }
    let mut rep = ProbeReport::new("grid_comparison");
    rep.metric("factor", factor).push_check(&t);
    rep.provenance.n = Some(lat.n);
    rep.provenance.m = Some(lat.m);
    Ok(rep)
}

/// Candidate test functions for operator-norm lower bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFamily {
    pub seed: u64,
    pub random: usize,
    pub structured: bool,
}

impl Default for CandidateFamily {
    fn default() -> Self {
        CandidateFamily { seed: 0, random: 8, structured: true }
    }
}

fn centered_cube(n: usize, center: f64, side: f64) -> Rect {
    Rect::cube_span(n, center - side / 2.0, center + side / 2.0)
}

impl CandidateFamily {
    /// Named candidates, all supported in `[0,1)^n`, in a fixed order.
    pub fn candidates(
        &self,
        lat: Lattice,
        p: &ExponentField,
        w: &WeightField,
    ) -> Result<Vec<(String, LatticeFunction)>> {
        let n = lat.n;
        let support = Rect::support_box(n);
        let mut out = Vec::new();
        if self.structured {
            out.push(("const".to_string(), LatticeFunction::indicator(lat, &support, 1.0)?));
            let h = lat.h();
            for (name, corner) in [("cell_center", 0.5), ("cell_origin", 0.0)] {
                let r = Rect::cube_span(n, corner, corner + h);
                out.push((name.to_string(), LatticeFunction::indicator(lat, &r, 1.0)?));
            }
            for j in 1..=4 {
                let side = (-(j as f64)).exp2();
                out.push((
                    format!("block_origin_{j}"),
                    LatticeFunction::indicator(lat, &Rect::cube_span(n, 0.0, side), 1.0)?,
                ));
                out.push((
                    format!("block_center_{j}"),
                    LatticeFunction::indicator(lat, &centered_cube(n, 0.5, side), 1.0)?,
                ));
            }
            // beta p_+ < n keeps the spike in L^{p_+}
            for theta in [0.25, 0.5, 0.75, 0.9] {
                let beta = theta * n as f64 / p.p_plus();
                for x0 in [0.5, 0.0] {
                    let f = LatticeFunction::from_fn(lat, |x| {
                        if !support.contains_point(&x) {
                            return 0.0;
                        }
                        let d = (0..n).map(|a| (x[a] - x0).powi(2)).sum::<f64>().sqrt();
                        d.powf(-beta)
                    })?;
                    out.push((format!("spike_{theta}_{x0}"), f));
                }
            }
            let sigma = w.dual_pow(p)?;
            for j in 0..=lat.m {
                let side = (-(j as f64)).exp2();
                let chi = LatticeFunction::indicator(lat, &centered_cube(n, 0.5, side), 1.0)?;
                out.push((format!("dual_weight_{j}"), chi.zip_map(&sigma, |a, b| a * b)?));
            }
        }
        let mut rng = stream(self.seed, "operator_norm_candidates");
        for i in 0..self.random {
            out.push((format!("random_{i}"), random_support_function(lat, &mut rng)));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// A lower bound for the operator norm on `L^p_w` (an estimate, not a
    /// certified value).
    pub value: f64,
    pub argmax: String,
    pub ratios: Vec<(String, f64)>,
    pub skipped: Vec<String>,
}

/// `max_f ||M f||_{L^p_w} / ||f||_{L^p_w}` over the candidate family.
pub fn operator_norm_lower_bound(
    kind: &MaximalKind,
    p: &ExponentField,
    w: &WeightField,
    family: &CandidateFamily,
) -> Result<NormEstimate> {
    let cands = family.candidates(p.lattice(), p, w)?;
    estimate_over(kind, p, w, &cands)
}

pub fn estimate_over(
    kind: &MaximalKind,
    p: &ExponentField,
    w: &WeightField,
    cands: &[(String, LatticeFunction)],
) -> Result<NormEstimate> {
    if cands.is_empty() {
        return Err(Error::InvalidParameter("empty candidate family".into()));
    }
    let results: Vec<Result<Option<f64>>> = cands
        .par_iter()
        .map(|(_, f)| {
            let nf = weighted_norm(f, p, w)?;
            if nf == 0.0 {
                return Ok(None);
            }
            let mf = maximal(f, kind)?;
            Ok(Some(weighted_norm(&mf, p, w)? / nf))
        })
        .collect();
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    for ((name, _), r) in cands.iter().zip(results) {
        match r? {
            Some(v) => ratios.push((name.clone(), v)),
            None => {
                warn!("candidate {name} has zero norm; skipped");
                skipped.push(name.clone());
            }
        }
    }
    let (argmax, value) =
        ratios
            .iter()
            .fold((String::new(), f64::NEG_INFINITY), |acc, (n, v)| if *v > acc.1 { (n.clone(), *v) } else { acc });
    if ratios.is_empty() {
        return Err(Error::InvalidParameter("every candidate has zero norm".into()));
    }
    Ok(NormEstimate { value, argmax, ratios, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridCube;
    use crate::rng::random_support_function;
    use rand::Rng;

    /// Brute force over every lattice-aligned window containing the center.
    fn brute_full(f: &LatticeFunction) -> Vec<f64> {
        let lat = f.lattice();
        let k = lat.per_axis();
        let a: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
        (0..k)
            .map(|i| {
                let mut best: f64 = 0.0;
                for st in 0..k {
                    for en in st + 1..=k {
                        if st <= i && i < en {
                            let s: f64 = a[st..en].iter().sum();
                            best = best.max(s / (en - st) as f64);
                        }
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn full_matches_brute_force_1d() {
        let mut rng = stream(5, "maxbrute");
        for m in [4, 6] {
            let lat = Lattice::new(1, m).unwrap();
            for trial in 0..12 {
                let mut f = random_support_function(lat, &mut rng);
                if trial % 3 == 0 {
                    // dense signed values over the whole box
                    let vals = (0..lat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    f = LatticeFunction::new(lat, vals).unwrap();
                }
                let mv = maximal(&f, &MaximalKind::Full).unwrap();
                for (x, y) in mv.values().iter().zip(brute_full(&f)) {
                    assert!((x - y).abs() <= 1e-12 * y.max(1.0), "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn full_matches_brute_force_2d() {
        let lat = Lattice::new(2, 2).unwrap();
        let k = lat.per_axis();
        let mut rng = stream(6, "maxbrute2");
        let f = random_support_function(lat, &mut rng);
        let m = maximal(&f, &MaximalKind::Full).unwrap();
        let pi = crate::lattice::PrefixIntegral::new(&f);
        for c in 0..lat.len() {
            let [i0, i1] = lat.multi_index(c);
            let mut best: f64 = 0.0;
            for t in 1..=k {
                for s0 in 0..=k - t {
                    for s1 in 0..=k - t {
                        if s0 <= i0 && i0 < s0 + t && s1 <= i1 && i1 < s1 + t {
                            let lo = [-1.0 + s0 as f64 * lat.h(), -1.0 + s1 as f64 * lat.h()];
                            let side = t as f64 * lat.h();
                            let r = Rect::new(2, lo, [lo[0] + side, lo[1] + side]);
                            best = best.max(pi.average(&r));
                        }
                    }
                }
            }
            assert!((m.values()[c] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let lat = Lattice::new(1, 5).unwrap();
        let f = LatticeFunction::constant(lat, 3.0).unwrap();
        let kinds = [
            MaximalKind::Full,
            MaximalKind::Grid(ShiftedGrid::new(1, [1, 0]).unwrap()),
            MaximalKind::LocalDyadic(Cube::new(1, [-1.0, 0.0], 2.0)),
        ];
        for k in kinds {
            let m = maximal(&f, &k).unwrap();
            let ok = match k {
                MaximalKind::LocalDyadic(q) => (0..lat.len())
                    .all(|c| !q.rect().contains_point(&lat.center(c)) || (m.values()[c] - 3.0).abs() < 1e-12),
                // shifted leaves at the box edge stick out, where f is zero
                _ => (0..lat.len()).all(|c| {
                    !Rect::support_box(1).contains_point(&lat.center(c)) || (m.values()[c] - 3.0).abs() < 1e-12
                }),
            };
            assert!(ok, "{k:?}");
        }
    }

    #[test]
    fn half_indicator_spot_value() {
        let lat = Lattice::new(1, 8).unwrap();
        let f = LatticeFunction::indicator(lat, &Rect::interval(0.0, 0.5), 1.0).unwrap();
        let m = maximal(&f, &MaximalKind::Full).unwrap();
        let c = (0..lat.len())
            .min_by(|&a, &b| (lat.center(a)[0] - 0.75).abs().total_cmp(&(lat.center(b)[0] - 0.75).abs()))
            .unwrap();
        let x = lat.center(c)[0];
        // best window is [0, right edge of x's cell)
        let right = x + lat.h() / 2.0;
        let expected = 0.5 / right;
        assert!((m.values()[c] - expected).abs() < 1e-12);
        assert!((m.values()[c] - 2.0 / 3.0).abs() < 2.0 * lat.h());
    }

    #[test]
    fn grid_spike_envelope() {
        let lat = Lattice::new(1, 8).unwrap();
        let cell = lat.cells_with_center_in(&Rect::interval(0.0, lat.h()))[0];
        let mut v = vec![0.0; lat.len()];
        v[cell] = 1.0 / lat.h();
        let f = LatticeFunction::new(lat, v).unwrap();
        let g = ShiftedGrid::standard(1);
        let m = maximal(&f, &MaximalKind::Grid(g)).unwrap();
        // brute force: every standard grid interval at levels -4..=8
        for c in 0..lat.len() {
            let x = lat.center(c);
            let mut best: f64 = 0.0;
            for level in -4..=8 {
                let q: GridCube = g.locate_point(level, &x);
                best = best.max(f.integrate(&q.rect()) / q.volume());
            }
            assert!((m.values()[c] - best).abs() < 1e-12);
            let d = (x[0] - lat.h() / 2.0).abs();
            if d > 0.05 && x[0] > 0.0 {
                // grid cubes reaching the spike from distance d have side in (d, 2d]
                // up to the spike's own offset, so Mf is between 1/(4d) and 1/d
                assert!(m.values()[c] >= 0.25 / (d + lat.h()) && m.values()[c] <= 1.0 / d);
            }
        }
    }

    #[test]
    fn ordering_and_comparison() {
        let lat = Lattice::new(1, 6).unwrap();
        let mut rng = stream(8, "order");
        let q0 = Cube::new(1, [0.0, 0.0], 1.0);
        for _ in 0..20 {
            let f = random_support_function(lat, &mut rng);
            let loc = maximal(&f, &MaximalKind::LocalDyadic(q0)).unwrap();
            let grid = maximal(&f, &MaximalKind::Grid(ShiftedGrid::standard(1))).unwrap();
            let full = maximal(&f, &MaximalKind::Full).unwrap();
            for c in 0..lat.len() {
                if q0.rect().contains_point(&lat.center(c)) {
                    assert!(loc.values()[c] <= grid.values()[c] + 1e-12);
                }
                assert!(grid.values()[c] <= full.values()[c] + 1e-12);
                assert!(full.values()[c] >= f.values()[c].abs());
            }
            assert!(check_grid_comparison(&f).unwrap().passed());
        }
    }

    #[test]
    fn norm_bound_envelope_constant_exponent() {
        let lat = Lattice::new(1, 7).unwrap();
        let q = 2.0;
        let p = ExponentField::constant(lat, q).unwrap();
        let w = WeightField::constant(lat, 1.0).unwrap();
        let est = operator_norm_lower_bound(
            &MaximalKind::Grid(ShiftedGrid::standard(1)),
            &p,
            &w,
            &CandidateFamily::default(),
        )
        .unwrap();
        assert!(est.value >= 1.0 - 1e-9);
        assert!(est.value <= q / (q - 1.0) + 1e-9, "{est:?}");
        let zero = vec![
            ("zero".to_string(), LatticeFunction::zeros(lat)),
            ("one".to_string(), LatticeFunction::indicator(lat, &Rect::support_box(1), 1.0).unwrap()),
        ];
        let e = estimate_over(&MaximalKind::Full, &p, &w, &zero).unwrap();
        assert_eq!(e.skipped, vec!["zero".to_string()]);
    }
}
