//! Stopping-time (Calderón–Zygmund) decompositions, sparse families, the
//! sparse operator and its adjoint.
//!
//! The global decomposition at height `k` selects the maximal cubes of a grid
//! with `|f|_Q > gamma^k`; the local one works inside `D(Q0)` with threshold
//! `gamma^k |f|_{Q0}`, `k >= 0`. A grid pyramid stops at `TOP_LEVEL`, but
//! since `f` vanishes outside the box the ancestors of a root are known
//! exactly (same integral, doubled side), so maximal cubes above the pyramid
//! are produced as lifted root ancestors and nothing is truncated.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::lattice::tree::{DyadicTree, NodeKey, TreeKind};
use crate::lattice::{Cube, LatticeFunction, Rect, ShiftedGrid};
use crate::report::{ProbeReport, Tally};
use crate::{Error, Result};

/// Relative volume tolerance for geometric comparisons of realized cubes
/// (shifted corners are multiples of 1/3 and round in the last bit).
const GEOM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CzVariant {
    Global,
    Local(Cube),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzCube {
    pub key: NodeKey,
    pub rect: Rect,
    pub volume: f64,
    /// Integral of `|f|` over the cube.
    pub integral: f64,
}

impl CzCube {
    pub fn average(&self) -> f64 {
        self.integral / self.volume
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CzLevel {
    pub k: i32,
    pub threshold: f64,
    pub cubes: Vec<CzCube>,
    /// For each cube, the index of the cube containing it one level down
    /// (`None` on the first level).
    pub container: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct CzDecomposition {
    pub gamma: f64,
    pub variant: CzVariant,
    /// `1` for the global variant, `|f|_{Q0}` for the local one.
    pub base: f64,
    pub levels: Vec<CzLevel>,
    tree: DyadicTree,
}

/// Largest integer `k` with `base * gamma^k < v` (`v > 0`).
fn largest_k_below(v: f64, gamma: f64, base: f64) -> i32 {
    let mut k = ((v / base).ln() / gamma.ln()).floor() as i32;
    while base * gamma.powi(k) >= v {
        k -= 1;
    }
    while base * gamma.powi(k + 1) < v {
        k += 1;
    }
    k
}

pub fn cz_decompose(f: &LatticeFunction, grid: ShiftedGrid, gamma: f64, variant: CzVariant) -> Result<CzDecomposition> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must exceed 1")));
    }
    let lat = f.lattice();
    if grid.n != lat.n {
        return Err(Error::LatticeMismatch("grid dimension".into()));
    }
    let tree = match variant {
        CzVariant::Global => DyadicTree::grid(f, grid),
        CzVariant::Local(q0) => {
            if q0.n != lat.n || !Rect::computational_box(lat.n).contains_rect(&q0.rect()) {
                return Err(Error::InvalidParameter(format!("local cube {q0:?} outside the computational box")));
            }
            DyadicTree::local(f, q0)
        }
    };
    let base = match variant {
        CzVariant::Global => 1.0,
        CzVariant::Local(_) => tree.nodes[tree.roots[0]].average(),
    };
    let mut cz = CzDecomposition { gamma, variant, base, levels: Vec::new(), tree };
    let max_avg = cz.tree.nodes.iter().map(|n| n.average()).fold(0.0, f64::max);
    if max_avg == 0.0 || base == 0.0 {
        return Ok(cz);
    }
    let k_hi = largest_k_below(max_avg, gamma, base);
    let k_lo = match variant {
        CzVariant::Global => {
            let min_pos = cz.tree.maximal().into_iter().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
            largest_k_below(min_pos, gamma, base)
        }
        CzVariant::Local(_) => 0,
    };
    for k in k_lo..=k_hi {
        let threshold = base * gamma.powi(k);
        let cubes = cz.select(threshold);
        let container = match cz.levels.last() {
            None => vec![None; cubes.len()],
            Some(prev) => {
                let index: HashMap<NodeKey, usize> = prev.cubes.iter().enumerate().map(|(i, c)| (c.key, i)).collect();
                cubes
                    .iter()
                    .map(|c| {
                        let mut cur = Some(c.key);
                        while let Some(key) = cur {
                            if let Some(&i) = index.get(&key) {
                                return Some(i);
                            }
                            cur = key.parent();
                        }
                        panic!("level {k} cube {:?} has no container at level {}", c.key, k - 1);
                    })
                    .collect()
            }
        };
        cz.levels.push(CzLevel { k, threshold, cubes, container });
    }
    Ok(cz)
}

impl CzDecomposition {
    pub fn tree(&self) -> &DyadicTree {
        &self.tree
    }

    pub fn grid(&self) -> Option<ShiftedGrid> {
        match self.tree.kind {
            TreeKind::Grid(g) => Some(g),
            TreeKind::Local(_) => None,
        }
    }

    fn select(&self, threshold: f64) -> Vec<CzCube> {
        let t = &self.tree;
        let n = t.lattice.n as i32;
        let mut out = Vec::new();
        let mut stack: Vec<usize> = t.roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            let node = &t.nodes[v];
            if node.average() > threshold {
                let mut cube = CzCube { key: node.key, rect: node.rect, volume: node.volume, integral: node.integral };
                if node.parent.is_none() {
                    if let Some(mut lift) = t.lifted_grid_cube(v, 0).map(|_| 0u32) {
                        while node.integral / (node.volume * 2f64.powi(n * (lift as i32 + 1))) > threshold {
                            lift += 1;
                        }
                        let key = t.lifted_grid_cube(v, lift).expect("grid tree");
                        cube = CzCube {
                            key: NodeKey::Grid(key),
                            rect: key.rect(),
                            volume: key.volume(),
                            integral: node.integral,
                        };
                    }
                }
                out.push(cube);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    /// Cells whose center lies in `Omega_k` for level index `li`.
    pub fn omega_cells(&self, li: usize) -> Vec<bool> {
        let thr = self.levels[li].threshold;
        let best = self.tree.ancestor_max();
        (0..self.tree.lattice.len()).map(|c| self.tree.leaf_of_cell(c).is_some_and(|v| best[v] > thr)).collect()
    }

    /// Same set as [`Self::omega_cells`], from the selected cubes' geometry.
    pub fn omega_cells_geometric(&self, li: usize) -> Vec<bool> {
        let lat = self.tree.lattice;
        let mut out = vec![false; lat.len()];
        for c in &self.levels[li].cubes {
            for cell in lat.cells_with_center_in(&c.rect) {
                out[cell] = true;
            }
        }
        out
    }

    /// `|Q ∩ Omega_{k+l}|` for every cube and `l = 0..=max_l` (zero past the
    /// last level), indexed `[li][j][l]`.
    pub fn descendant_volumes(&self, max_l: usize) -> Vec<Vec<Vec<f64>>> {
        let nl = self.levels.len();
        let mut vols: Vec<Vec<Vec<f64>>> =
            self.levels.iter().map(|lv| lv.cubes.iter().map(|c| vec![c.volume; 1]).collect()).collect();
        for l in 1..=max_l {
            for li in 0..nl {
                let mut acc = vec![0.0; self.levels[li].cubes.len()];
                if li + 1 < nl {
                    let next = &self.levels[li + 1];
                    for (j, cont) in next.container.iter().enumerate() {
                        let parent = cont.expect("container beyond first level");
                        acc[parent] += vols[li + 1][j][l - 1];
                    }
                }
                for (j, a) in acc.into_iter().enumerate() {
                    vols[li][j].push(a);
                }
            }
        }
        vols
    }

    /// Decay `|Q_j^k ∩ Omega_{k+l}| <= 2^n gamma^{-l} |Q_j^k|` for `l <= max_l`.
    pub fn check_decay(&self, max_l: usize) -> Tally {
        let n = self.tree.lattice.n as i32;
        let mut t = Tally::hard("decay");
        for (li, per_cube) in self.descendant_volumes(max_l).iter().enumerate() {
            for (j, vols) in per_cube.iter().enumerate() {
                let q = self.levels[li].cubes[j].volume;
                for (l, v) in vols.iter().enumerate() {
                    t.leq(*v, 2f64.powi(n) * self.gamma.powi(-(l as i32)) * q, 1e-12, 0.0);
                }
            }
        }
        t
    }

    /// Selection invariants: averages above the threshold, parents (or the
    /// next lift) at or below it, cubes of one level pairwise distinct and
    /// non-nested.
    pub fn check_selection(&self) -> Tally {
        let mut t = Tally::hard("selection");
        let n = self.tree.lattice.n as i32;
        let index: HashMap<NodeKey, usize> = self.tree.nodes.iter().enumerate().map(|(i, nd)| (nd.key, i)).collect();
        for lv in &self.levels {
            for c in &lv.cubes {
                let parent_avg = self.parent_average(c, n, &index);
                t.record(c.average() / lv.threshold, c.average() > lv.threshold && parent_avg <= lv.threshold);
            }
            for (i, a) in lv.cubes.iter().enumerate() {
                for b in &lv.cubes[..i] {
                    t.record(0.0, !a.key.contains(&b.key) && !b.key.contains(&a.key));
                }
            }
        }
        t
    }

    fn parent_average(&self, c: &CzCube, n: i32, index: &HashMap<NodeKey, usize>) -> f64 {
        match c.key.parent() {
            None => 0.0,
            Some(pk) => match index.get(&pk) {
                Some(&i) => self.tree.nodes[i].average(),
                // above the pyramid: f is zero outside the box
                None => c.integral / (c.volume * 2f64.powi(n)),
            },
        }
    }
}

/// One member `(Q, E(Q))` of a sparse family; `E(Q) = Q` minus the union of
/// the pairwise disjoint `removed` subcubes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub key: Option<NodeKey>,
    pub level: Option<i32>,
    pub cube: Rect,
    pub removed: Vec<Rect>,
    pub e_volume: f64,
}

impl SparseEntry {
    pub fn new(key: Option<NodeKey>, level: Option<i32>, cube: Rect, removed: Vec<Rect>) -> Self {
        let e_volume = cube.volume() - removed.iter().map(|r| r.volume()).sum::<f64>();
        SparseEntry { key, level, cube, removed, e_volume: e_volume.max(0.0) }
    }

    pub fn volume(&self) -> f64 {
        self.cube.volume()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub eta: f64,
    pub entries: Vec<SparseEntry>,
}

fn approx_contains(outer: &Rect, inner: &Rect) -> bool {
    let tol = GEOM_TOL * (outer.hi[0] - outer.lo[0]).max(1.0);
    (0..outer.n).all(|a| outer.lo[a] <= inner.lo[a] + tol && inner.hi[a] <= outer.hi[a] + tol)
}

fn overlap_volume(a: &Rect, b: &Rect) -> f64 {
    a.intersection(b).map_or(0.0, |r| r.volume())
}

impl SparseFamily {
    /// Sparsity `eta |Q| <= |E(Q)|` per entry.
    pub fn check_sparsity(&self) -> Tally {
        let mut t = Tally::hard("sparsity");
        for e in &self.entries {
            t.leq(self.eta * e.volume(), e.e_volume, 1e-12, 0.0);
        }
        t
    }

    /// Pairwise disjointness of the `E(Q)`. For members of one dyadic grid two
    /// cubes are nested or disjoint; a nested pair has disjoint sets exactly
    /// when the inner cube sits inside a removed piece of the outer one.
    pub fn check_disjoint(&self) -> Tally {
        let mut t = Tally::hard("disjoint");
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| self.entries[b].volume().total_cmp(&self.entries[a].volume()));
        for (pos, &i) in order.iter().enumerate() {
            let outer = &self.entries[i];
            for &j in &order[pos + 1..] {
                let inner = &self.entries[j];
                let ov = overlap_volume(&outer.cube, &inner.cube);
                if ov <= GEOM_TOL * inner.volume() {
                    continue;
                }
                let ok = if approx_contains(&outer.cube, &inner.cube) {
                    inner.e_volume == 0.0
                        || outer.e_volume == 0.0
                        || outer.removed.iter().any(|r| approx_contains(r, &inner.cube))
                } else {
                    false
                };
                t.record(ov / inner.volume(), ok);
            }
        }
        t
    }

    pub fn family_hash(&self) -> String {
        crate::report::family_hash(self)
    }
}

/// `sum_Q f_Q chi_{E(Q)}` with cell-average semantics.
pub fn sparse_operator(s: &SparseFamily, f: &LatticeFunction) -> Result<LatticeFunction> {
    let lat = f.lattice();
    let cv = lat.cell_volume();
    let mut out = vec![0.0; lat.len()];
    for e in &s.entries {
        let avg = f.integrate(&e.cube) / e.volume();
        for (c, ov) in lat.overlaps(&e.cube) {
            out[c] += avg * ov / cv;
        }
        for r in &e.removed {
            for (c, ov) in lat.overlaps(r) {
                out[c] -= avg * ov / cv;
            }
        }
    }
    LatticeFunction::new(lat, out)
}

/// `sum_Q (|Q|^{-1} int_{E(Q)} f) chi_Q` with cell-average semantics.
pub fn adjoint_sparse_operator(s: &SparseFamily, f: &LatticeFunction) -> Result<LatticeFunction> {
    let lat = f.lattice();
    let cv = lat.cell_volume();
    let mut out = vec![0.0; lat.len()];
    for e in &s.entries {
        let on_e = f.integrate(&e.cube) - e.removed.iter().map(|r| f.integrate(r)).sum::<f64>();
        let coef = on_e / e.volume();
        for (c, ov) in lat.overlaps(&e.cube) {
            out[c] += coef * ov / cv;
        }
    }
    LatticeFunction::new(lat, out)
}

/// `sum_Q f_Q chi_{E(Q)}(x)` evaluated at cell centers.
pub fn sparse_at_centers(s: &SparseFamily, f: &LatticeFunction) -> Vec<f64> {
    let lat = f.lattice();
    let mut out = vec![0.0; lat.len()];
    for e in &s.entries {
        let avg = f.integrate(&e.cube) / e.volume();
        let mut inside: Vec<usize> = lat.cells_with_center_in(&e.cube);
        if !e.removed.is_empty() {
            inside.retain(|&c| {
                let x = lat.center(c);
                !e.removed.iter().any(|r| r.contains_point(&x))
            });
        }
        for c in inside {
            out[c] += avg;
        }
    }
    out
}

/// Sparse family `Q_j^k`, `E = Q_j^k \ Omega_{k+1}` from the decomposition
/// with `gamma = 2^n / (1 - eta)`, plus the pointwise domination certificate
/// `M^D f <= gamma sum_Q f_Q chi_{E(Q)}` at every cell center.
pub fn sparse_from_maximal(f: &LatticeFunction, grid: ShiftedGrid, eta: f64) -> Result<(SparseFamily, ProbeReport)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} not in (0,1)")));
    }
    if !f.is_nonnegative() {
        return Err(Error::Precondition("sparse domination needs f >= 0".into()));
    }
    let lat = f.lattice();
    let gamma = 2f64.powi(lat.n as i32) / (1.0 - eta);
    let cz = cz_decompose(f, grid, gamma, CzVariant::Global)?;
    let family = family_from_decomposition(&cz, eta);

    let lhs = cz.tree().maximal();
    let rhs = sparse_at_centers(&family, f);
    let mut dom = Tally::hard("pointwise");
    for (l, r) in lhs.iter().zip(&rhs) {
        dom.leq(*l, gamma * r, 1e-12, 0.0);
    }
    let mut rep = ProbeReport::new("sparse_domination");
    rep.metric("eta", eta)
        .metric("gamma", gamma)
        .metric("members", family.entries.len() as f64)
        .metric("levels", cz.levels.len() as f64)
        .push_check(&dom)
        .push_check(&family.check_sparsity())
        .push_check(&family.check_disjoint());
    rep.provenance.family_hash = Some(family.family_hash());
    rep.provenance.n = Some(lat.n);
    rep.provenance.m = Some(lat.m);
    Ok((family, rep))
}

pub fn family_from_decomposition(cz: &CzDecomposition, eta: f64) -> SparseFamily {
    let mut entries = Vec::new();
    for (li, lv) in cz.levels.iter().enumerate() {
        let mut removed: Vec<Vec<Rect>> = vec![Vec::new(); lv.cubes.len()];
        if let Some(next) = cz.levels.get(li + 1) {
            for (j, cont) in next.container.iter().enumerate() {
                removed[cont.expect("nested levels")].push(next.cubes[j].rect);
            }
        }
        for (c, rem) in lv.cubes.iter().zip(removed) {
            let mut e = SparseEntry::new(Some(c.key), Some(lv.k), c.rect, rem);
            // removed cubes are grid cubes: their volumes are exact powers of two
            e.e_volume = c.volume - e.removed.iter().map(|r| r.volume()).sum::<f64>();
            entries.push(e);
        }
    }
    SparseFamily { eta, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_shifted_grids, GridCube, Lattice};
    use crate::rng::{random_support_function, stream};

    #[test]
    fn indicator_levels_match_brute_force() {
        let lat = Lattice::new(1, 8).unwrap();
        let f = LatticeFunction::indicator(lat, &Rect::interval(0.0, 0.125), 1.0).unwrap();
        let g = ShiftedGrid::standard(1);
        let cz = cz_decompose(&f, g, 2.0, CzVariant::Global).unwrap();
        assert!(cz.check_selection().violations() == 0);
        for (li, lv) in cz.levels.iter().enumerate() {
            // oracle: a center is in Omega_k iff some standard interval through it
            // at levels -12..=8 has average > 2^k
            let brute: Vec<bool> = (0..lat.len())
                .map(|c| {
                    let x = lat.center(c);
                    (-12..=8).any(|level| {
                        let q: GridCube = g.locate_point(level, &x);
                        f.integrate(&q.rect()) / q.volume() > lv.threshold
                    })
                })
                .collect();
            assert_eq!(brute, cz.omega_cells(li));
            assert_eq!(brute, cz.omega_cells_geometric(li));
        }
        // for 1/2 <= 2^k < 1 the only selected cube is the support itself;
        // below, Omega_k is the dyadic interval [0, 2^{-k-4})
        let top = cz.levels.last().unwrap();
        assert_eq!(top.k, -1);
        assert_eq!(top.cubes.len(), 1);
        assert_eq!((top.cubes[0].rect.lo[0], top.cubes[0].rect.hi[0]), (0.0, 0.125));
        for lv in &cz.levels[..cz.levels.len() - 1] {
            assert_eq!(lv.cubes.len(), 1);
            let side = (-(lv.k as f64) - 4.0).exp2();
            assert_eq!((lv.cubes[0].rect.lo[0], lv.cubes[0].rect.hi[0]), (0.0, side));
        }
    }

    #[test]
    fn constant_on_box_has_no_level_at_or_above_one() {
        let lat = Lattice::new(1, 5).unwrap();
        let f = LatticeFunction::constant(lat, 1.0).unwrap();
        let cz = cz_decompose(&f, ShiftedGrid::standard(1), 2.0, CzVariant::Global).unwrap();
        assert!(cz.levels.iter().all(|lv| lv.threshold < 1.0));
        assert_eq!(cz.levels.last().unwrap().k, -1);
        let zero =
            cz_decompose(&LatticeFunction::zeros(lat), ShiftedGrid::standard(1), 2.0, CzVariant::Global).unwrap();
        assert!(zero.levels.is_empty());
        assert!(cz_decompose(&f, ShiftedGrid::standard(1), 1.0, CzVariant::Global).is_err());
    }

    #[test]
    fn random_decompositions() {
        let mut rng = stream(21, "cz");
        for n in 1..=2 {
            let lat = Lattice::new(n, if n == 1 { 6 } else { 3 }).unwrap();
            for g in build_shifted_grids(n).unwrap() {
                let f = random_support_function(lat, &mut rng);
                for gamma in [2.0, 2f64.powi(n as i32 + 1)] {
                    let cz = cz_decompose(&f, g, gamma, CzVariant::Global).unwrap();
                    assert_eq!(cz.check_decay(6).violations(), 0);
                    assert_eq!(cz.check_selection().violations(), 0);
                    for li in 0..cz.levels.len() {
                        let a = cz.omega_cells(li);
                        assert_eq!(a, cz.omega_cells_geometric(li));
                        if li + 1 < cz.levels.len() {
                            let b = cz.omega_cells(li + 1);
                            assert!(a.iter().zip(&b).all(|(x, y)| *x || !*y));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stratification_identity() {
        // (Omega_k \ Omega_{k+nu}) = union of the layers Omega_{k+i} \ Omega_{k+i+1}
        let lat = Lattice::new(1, 7).unwrap();
        let mut rng = stream(22, "strat");
        let f = random_support_function(lat, &mut rng);
        let cz = cz_decompose(&f, ShiftedGrid::new(1, [2, 0]).unwrap(), 2.0, CzVariant::Global).unwrap();
        let om: Vec<Vec<bool>> = (0..cz.levels.len()).map(|li| cz.omega_cells_geometric(li)).collect();
        let get = |li: usize, c: usize| om.get(li).is_some_and(|v| v[c]);
        for nu in 1..=3 {
            for li in 0..cz.levels.len() {
                for c in 0..lat.len() {
                    let lhs = get(li, c) && !get(li + nu, c);
                    let rhs = (0..nu).any(|i| get(li + i, c) && !get(li + i + 1, c));
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn local_variant() {
        let lat = Lattice::new(1, 6).unwrap();
        let mut rng = stream(23, "local");
        let q0 = Cube::new(1, [0.0, 0.0], 1.0);
        for _ in 0..10 {
            let f = random_support_function(lat, &mut rng);
            let cz = cz_decompose(&f, ShiftedGrid::standard(1), 2.0, CzVariant::Local(q0)).unwrap();
            assert!(cz.levels.iter().all(|lv| lv.k >= 0));
            assert_eq!(cz.check_decay(6).violations(), 0);
            assert_eq!(cz.check_selection().violations(), 0);
        }
    }

    #[test]
    fn spike_family_is_ancestor_chain() {
        let lat = Lattice::new(1, 8).unwrap();
        let mut v = vec![0.0; lat.len()];
        let cell = lat.cells_with_center_in(&Rect::interval(0.25, 0.25 + lat.h()))[0];
        v[cell] = 1.0 / lat.h();
        let f = LatticeFunction::new(lat, v).unwrap();
        let (fam, rep) = sparse_from_maximal(&f, ShiftedGrid::standard(1), 0.5).unwrap();
        assert!(rep.passed(), "{:?}", rep.checks);
        // every member contains the spike cell, so the members form a chain
        let spike = lat.cell_rect(cell);
        assert!(fam.entries.iter().all(|e| approx_contains(&e.cube, &spike)));
    }

    #[test]
    fn random_sparse_certificates() {
        let mut rng = stream(24, "sparse");
        let lat = Lattice::new(1, 6).unwrap();
        for eta in [0.25, 0.5, 0.75] {
            for g in build_shifted_grids(1).unwrap() {
                let f = random_support_function(lat, &mut rng);
                let (_, rep) = sparse_from_maximal(&f, g, eta).unwrap();
                assert!(rep.passed(), "{:?}", rep.checks);
            }
        }
        let f = LatticeFunction::constant(lat, 1.0).unwrap();
        let (_, rep) = sparse_from_maximal(&f, ShiftedGrid::standard(1), 0.5).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn sparse_operator_examples() {
        let lat = Lattice::new(1, 5).unwrap();
        let q = Rect::interval(0.0, 0.5);
        let s = SparseFamily { eta: 0.5, entries: vec![SparseEntry::new(None, None, q, vec![])] };
        let one = LatticeFunction::constant(lat, 1.0).unwrap();
        let chi = LatticeFunction::indicator(lat, &q, 1.0).unwrap();
        assert_eq!(sparse_operator(&s, &one).unwrap(), chi);
        assert_eq!(adjoint_sparse_operator(&s, &one).unwrap(), chi);
        let empty_e = SparseFamily { eta: 0.5, entries: vec![SparseEntry::new(None, None, q, vec![q])] };
        assert!(adjoint_sparse_operator(&empty_e, &one).unwrap().is_zero());
        let two = SparseFamily {
            eta: 0.5,
            entries: vec![
                SparseEntry::new(None, None, Rect::interval(0.0, 0.25), vec![]),
                SparseEntry::new(None, None, Rect::interval(0.5, 1.0), vec![]),
            ],
        };
        let f = LatticeFunction::from_fn(lat, |x| x[0].max(0.0)).unwrap();
        let out = sparse_operator(&two, &f).unwrap();
        let a1 = f.integrate(&Rect::interval(0.0, 0.25)) / 0.25;
        let a2 = f.integrate(&Rect::interval(0.5, 1.0)) / 0.5;
        let expect = LatticeFunction::indicator(lat, &Rect::interval(0.0, 0.25), a1)
            .unwrap()
            .zip_map(&LatticeFunction::indicator(lat, &Rect::interval(0.5, 1.0), a2).unwrap(), |x, y| x + y)
            .unwrap();
        for (x, y) in out.values().iter().zip(expect.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_on_shifted_family() {
        let lat = Lattice::new(1, 6).unwrap();
        let mut rng = stream(25, "adj");
        let f0 = random_support_function(lat, &mut rng);
        let (fam, _) = sparse_from_maximal(&f0, ShiftedGrid::new(1, [1, 0]).unwrap(), 0.5).unwrap();
        let f = random_support_function(lat, &mut rng);
        let g = random_support_function(lat, &mut rng);
        let lhs = sparse_operator(&fam, &f).unwrap().zip_map(&g, |a, b| a * b).unwrap().integral();
        let rhs = adjoint_sparse_operator(&fam, &g).unwrap().zip_map(&f, |a, b| a * b).unwrap().integral();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}
