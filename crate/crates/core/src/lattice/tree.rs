//! Dyadic trees carrying exact integrals of `|f|`.
//!
//! Two flavours share one representation:
//! * a grid pyramid for a shifted grid, with one node per grid cube meeting
//!   the computational box at every level in `[TOP_LEVEL, m]`;
//! * the local tree `D(Q0)` obtained by repeated subdivision of a cube `Q0`
//!   down to cells no larger than the lattice cell.
//!
//! Leaves are located for every cell center in exact arithmetic, so "the cell
//! center lies in node `v`" is equivalent to "`v` is on the ancestor chain of
//! the cell's leaf".

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grid::{GridCube, ShiftedGrid, TOP_LEVEL};
use super::{Cube, Lattice, LatticeFunction, Rect};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TreeKind {
    Grid(ShiftedGrid),
    Local(Cube),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKey {
    Grid(GridCube),
    Local { depth: u32, index: [u64; 2] },
}

impl NodeKey {
    /// Parent key; `None` above the root of a local tree.
    pub fn parent(&self) -> Option<NodeKey> {
        match *self {
            NodeKey::Grid(c) => Some(NodeKey::Grid(c.parent())),
            NodeKey::Local { depth: 0, .. } => None,
            NodeKey::Local { depth, index } => {
                Some(NodeKey::Local { depth: depth - 1, index: [index[0] / 2, index[1] / 2] })
            }
        }
    }

    fn depth(&self) -> i64 {
        match *self {
            NodeKey::Grid(c) => c.level as i64,
            NodeKey::Local { depth, .. } => depth as i64,
        }
    }

    /// `other` is `self` or one of its descendants.
    pub fn contains(&self, other: &NodeKey) -> bool {
        match (self, other) {
            (NodeKey::Grid(a), NodeKey::Grid(b)) => a.contains(b),
            (NodeKey::Local { .. }, NodeKey::Local { .. }) => {
                let mut cur = *other;
                while cur.depth() > self.depth() {
                    cur = cur.parent().expect("deeper than self");
                }
                cur == *self
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub key: NodeKey,
    pub rect: Rect,
    pub volume: f64,
    /// Exact integral of `|f|` over the cube.
    pub integral: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl Node {
    pub fn average(&self) -> f64 {
        self.integral / self.volume
    }
}

#[derive(Clone, Debug)]
pub struct DyadicTree {
    pub lattice: Lattice,
    pub kind: TreeKind,
    pub nodes: Vec<Node>,
    pub roots: Vec<usize>,
    leaf_of_cell: Vec<Option<usize>>,
}

impl DyadicTree {
    pub fn grid(f: &LatticeFunction, grid: ShiftedGrid) -> Self {
        let lat = f.lattice();
        let af = f.abs();
        let m = lat.m as i32;
        let k = lat.per_axis();
        let n = lat.n;

        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for a in 0..n {
            // one extra cube per side: shifted leaves holding the edge cell
            // centers do not reach the box boundary
            lo[a] = grid.locate_center(&lat, m, a, 0) - 1;
            hi[a] = grid.locate_center(&lat, m, a, k - 1) + 1;
        }
        let mut nodes = Vec::new();
        let mut index_of: HashMap<GridCube, usize> = HashMap::new();
        let span1 = if n == 2 { lo[1]..=hi[1] } else { 0..=0 };
        for j0 in lo[0]..=hi[0] {
            for j1 in span1.clone() {
                let c = GridCube { grid, level: m, index: [j0, j1] };
                let rect = c.rect();
                if rect.intersection(&Rect::computational_box(n)).is_none() {
                    continue;
                }
                index_of.insert(c, nodes.len());
                nodes.push(Node {
                    key: NodeKey::Grid(c),
                    rect,
                    volume: c.volume(),
                    integral: af.integrate(&rect),
                    parent: None,
                    children: Vec::new(),
                });
            }
        }
        let mut leaf_of_cell = vec![None; lat.len()];
        for (flat, slot) in leaf_of_cell.iter_mut().enumerate() {
            let idx = lat.multi_index(flat);
            let mut index = [0i64; 2];
            for a in 0..n {
                index[a] = grid.locate_center(&lat, m, a, idx[a]);
            }
            *slot = Some(index_of[&GridCube { grid, level: m, index }]);
        }

        let mut current: Vec<usize> = (0..nodes.len()).collect();
        for _level in (TOP_LEVEL..m).rev() {
            let mut next = Vec::new();
            let mut parent_of: HashMap<GridCube, usize> = HashMap::new();
            for &child in &current {
                let NodeKey::Grid(c) = nodes[child].key else { unreachable!() };
                let pc = c.parent();
                let pid = *parent_of.entry(pc).or_insert_with(|| {
                    nodes.push(Node {
                        key: NodeKey::Grid(pc),
                        rect: pc.rect(),
                        volume: pc.volume(),
                        integral: 0.0,
                        parent: None,
                        children: Vec::new(),
                    });
                    next.push(nodes.len() - 1);
                    nodes.len() - 1
                });
                nodes[child].parent = Some(pid);
                nodes[pid].children.push(child);
            }
            for &p in &next {
                let mut kids = nodes[p].children.clone();
                kids.sort_by_key(|&c| nodes[c].key);
                nodes[p].integral = kids.iter().map(|&c| nodes[c].integral).sum();
                nodes[p].children = kids;
            }
            next.sort_by_key(|&p| nodes[p].key);
            current = next;
        }
        DyadicTree { lattice: lat, kind: TreeKind::Grid(grid), nodes, roots: current, leaf_of_cell }
    }

    /// The tree `D(Q0)`, subdivided until cubes are no larger than a cell.
    pub fn local(f: &LatticeFunction, q0: Cube) -> Self {
        let lat = f.lattice();
        let af = f.abs();
        let n = lat.n;
        let h = lat.h();
        let mut depth = 0u32;
        while q0.side / (depth as f64).exp2() > h * (1.0 + 1e-12) {
            depth += 1;
        }
        let per = 1u64 << depth;
        let leaf_side = q0.side / per as f64;
        let mut nodes = Vec::new();
        let span1 = if n == 2 { per } else { 1 };
        for i0 in 0..per {
            for i1 in 0..span1 {
                let mut corner = q0.corner;
                corner[0] += i0 as f64 * leaf_side;
                if n == 2 {
                    corner[1] += i1 as f64 * leaf_side;
                }
                let c = Cube::new(n, corner, leaf_side);
                let rect = c.rect();
                nodes.push(Node {
                    key: NodeKey::Local { depth, index: [i0, i1] },
                    rect,
                    volume: c.volume(),
                    integral: af.integrate(&rect),
                    parent: None,
                    children: Vec::new(),
                });
            }
        }
        let q0_rect = q0.rect();
        let leaf_of_cell = (0..lat.len())
            .map(|flat| {
                let x = lat.center(flat);
                if !q0_rect.contains_point(&x) {
                    return None;
                }
                let mut idx = [0u64; 2];
                for a in 0..n {
                    let t = ((x[a] - q0.corner[a]) / leaf_side).floor() as i64;
                    idx[a] = t.clamp(0, per as i64 - 1) as u64;
                }
                Some((idx[0] * span1 + idx[1]) as usize)
            })
            .collect();

        let mut current: Vec<usize> = (0..nodes.len()).collect();
        let mut d = depth;
        while d > 0 {
            d -= 1;
            let mut parent_of: HashMap<[u64; 2], usize> = HashMap::new();
            let mut next = Vec::new();
            for &child in &current {
                let NodeKey::Local { index, .. } = nodes[child].key else { unreachable!() };
                let pidx = [index[0] / 2, if n == 2 { index[1] / 2 } else { 0 }];
                let pid = *parent_of.entry(pidx).or_insert_with(|| {
                    let side = q0.side / (d as f64).exp2();
                    let mut corner = q0.corner;
                    corner[0] += pidx[0] as f64 * side;
                    if n == 2 {
                        corner[1] += pidx[1] as f64 * side;
                    }
                    let c = Cube::new(n, corner, side);
                    nodes.push(Node {
                        key: NodeKey::Local { depth: d, index: pidx },
                        rect: c.rect(),
                        volume: c.volume(),
                        integral: 0.0,
                        parent: None,
                        children: Vec::new(),
                    });
                    next.push(nodes.len() - 1);
                    nodes.len() - 1
                });
                nodes[child].parent = Some(pid);
                nodes[pid].children.push(child);
            }
            for &p in &next {
                nodes[p].integral = nodes[p].children.iter().map(|&c| nodes[c].integral).sum();
            }
            current = next;
        }
        DyadicTree { lattice: lat, kind: TreeKind::Local(q0), nodes, roots: current, leaf_of_cell }
    }

    pub fn leaf_of_cell(&self, cell: usize) -> Option<usize> {
        self.leaf_of_cell[cell]
    }

    /// Node ids from the cell's leaf up to its root.
    pub fn chain(&self, cell: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.leaf_of_cell[cell];
        while let Some(v) = cur {
            out.push(v);
            cur = self.nodes[v].parent;
        }
        out
    }

    pub fn root_of(&self, mut v: usize) -> usize {
        while let Some(p) = self.nodes[v].parent {
            v = p;
        }
        v
    }

    /// Nodes in top-down order (every parent precedes its children).
    pub fn top_down(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        order
    }

    /// For every node, the largest average over the node and its ancestors.
    pub fn ancestor_max(&self) -> Vec<f64> {
        let mut best = vec![0.0; self.nodes.len()];
        for v in self.top_down() {
            let own = self.nodes[v].average();
            best[v] = match self.nodes[v].parent {
                Some(p) => own.max(best[p]),
                None => own,
            };
        }
        best
    }

    /// Discrete maximal function over the tree's cubes at cell centers
    /// (zero at cells outside the tree).
    pub fn maximal(&self) -> Vec<f64> {
        let best = self.ancestor_max();
        self.leaf_of_cell.iter().map(|l| l.map_or(0.0, |v| best[v])).collect()
    }

    /// Grid key of the `lift`-th ancestor of a root (grid trees only).
    pub fn lifted_grid_cube(&self, root: usize, lift: u32) -> Option<GridCube> {
        match self.nodes[root].key {
            NodeKey::Grid(c) => Some(c.ancestor(lift)),
            NodeKey::Local { .. } => None,
        }
    }
}
