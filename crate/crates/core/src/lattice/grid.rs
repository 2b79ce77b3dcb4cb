//! Shifted dyadic grids `D_a = { 2^-k ([0,1)^n + j + (-1)^k a) }`, `a in {0,1/3,2/3}^n`.
//!
//! The alternating sign makes consecutive levels nest: the children of the
//! level-`k` cube with index `j` are the level-`k+1` cubes with indices
//! `2j + (-1)^k 3a + {0, 1}` (componentwise), and `3a` is an integer.

use serde::{Deserialize, Serialize};

use super::{Cube, Lattice, Rect};
use crate::{Error, Result};

/// Coarsest grid level kept in grid pyramids (side `2^4`). Every lattice-aligned
/// window inside the computational box has a covering grid cube at a level in
/// `[TOP_LEVEL, m]`.
pub const TOP_LEVEL: i32 = -4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftedGrid {
    pub n: usize,
    /// `3a` per axis, each in `{0, 1, 2}`.
    pub shift3: [u8; 2],
}

impl ShiftedGrid {
    pub fn new(n: usize, shift3: [u8; 2]) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if shift3.iter().take(n).any(|&s| s > 2) {
            return Err(Error::InvalidParameter(format!("shift {shift3:?} not in {{0,1,2}}")));
        }
        let mut s = [0u8; 2];
        s[..n].copy_from_slice(&shift3[..n]);
        Ok(ShiftedGrid { n, shift3: s })
    }

    /// The standard dyadic grid `2^-k([0,1)^n + j)`.
    pub fn standard(n: usize) -> Self {
        ShiftedGrid { n, shift3: [0, 0] }
    }

    pub fn alpha(&self) -> [f64; 2] {
        [self.shift3[0] as f64 / 3.0, self.shift3[1] as f64 / 3.0]
    }

    pub fn is_standard(&self) -> bool {
        self.shift3 == [0, 0]
    }

    fn signed_shift(&self, level: i32, axis: usize) -> i64 {
        let s = self.shift3[axis] as i64;
        if level.rem_euclid(2) == 0 {
            s
        } else {
            -s
        }
    }

    /// Index of the level-`level` cube containing the center of cell `i`
    /// (along `axis`), computed in exact integer arithmetic. Needs `level <= m + 1`.
    pub fn locate_center(&self, lat: &Lattice, level: i32, axis: usize, i: usize) -> i64 {
        debug_assert!(level <= lat.m as i32 + 1);
        let shift = (lat.m as i32 + 1 - level) as u32;
        // x = (2i + 1 - 2^{m+1}) / 2^{m+1};  j = floor((3 x 2^k - s a3) / 3)
        let num = 3 * (2 * i as i128 + 1 - (1i128 << (lat.m + 1)))
            - (self.signed_shift(level, axis) as i128) * (1i128 << shift);
        let den = 3 * (1i128 << shift);
        num.div_euclid(den) as i64
    }

    /// The cube at `level` containing the point `x` (floating point).
    pub fn locate_point(&self, level: i32, x: &[f64; 2]) -> GridCube {
        let mut index = [0i64; 2];
        let scale = 3.0 * (level as f64).exp2();
        for a in 0..self.n {
            let y = scale * x[a] - self.signed_shift(level, a) as f64;
            index[a] = (y / 3.0).floor() as i64;
        }
        GridCube { grid: *self, level, index }
    }
}

/// A cube addressed by (grid, level, index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCube {
    pub grid: ShiftedGrid,
    pub level: i32,
    pub index: [i64; 2],
}

impl GridCube {
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.grid.n as i32)
    }

    /// Realized corner `2^-k (j + (-1)^k a)`.
    pub fn corner(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for a in 0..self.grid.n {
            let num = 3 * self.index[a] + self.grid.signed_shift(self.level, a);
            c[a] = num as f64 * self.side() / 3.0;
        }
        c
    }

    pub fn cube(&self) -> Cube {
        Cube::new(self.grid.n, self.corner(), self.side())
    }

    pub fn rect(&self) -> Rect {
        self.cube().rect()
    }

    pub fn parent(&self) -> GridCube {
        let lvl = self.level - 1;
        let mut index = [0i64; 2];
        for a in 0..self.grid.n {
            index[a] = (self.index[a] - self.grid.signed_shift(lvl, a)).div_euclid(2);
        }
        GridCube { grid: self.grid, level: lvl, index }
    }

    /// Ancestor `up` levels above (`up = 0` is the cube itself).
    pub fn ancestor(&self, up: u32) -> GridCube {
        (0..up).fold(*self, |c, _| c.parent())
    }

    pub fn children(&self) -> Vec<GridCube> {
        let n = self.grid.n;
        let mut base = [0i64; 2];
        for (a, b) in base.iter_mut().enumerate().take(n) {
            *b = 2 * self.index[a] + self.grid.signed_shift(self.level, a);
        }
        let count = 1usize << n;
        (0..count)
            .map(|bits| {
                let mut index = [0i64; 2];
                for a in 0..n {
                    index[a] = base[a] + ((bits >> (n - 1 - a)) & 1) as i64;
                }
                GridCube { grid: self.grid, level: self.level + 1, index }
            })
            .collect()
    }

    /// `self` contains `other` (same grid): `other` is a descendant or equal.
    pub fn contains(&self, other: &GridCube) -> bool {
        other.grid == self.grid
            && other.level >= self.level
            && other.ancestor((other.level - self.level) as u32) == *self
    }
}

/// The `3^n` shifted grids, standard grid first.
pub fn build_shifted_grids(n: usize) -> Result<Vec<ShiftedGrid>> {
    match n {
        1 => (0..3).map(|s| ShiftedGrid::new(1, [s, 0])).collect(),
        2 => (0..9).map(|s| ShiftedGrid::new(2, [s / 3, s % 3])).collect(),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

fn grid_cube_contains_free(level: i32, grid: &ShiftedGrid, q: &Cube) -> Option<GridCube> {
    let scale = 3.0 * (level as f64).exp2();
    let mut index = [0i64; 2];
    for a in 0..q.n {
        let s = grid.signed_shift(level, a) as f64;
        let lo = scale * q.corner[a] - s;
        let hi = scale * (q.corner[a] + q.side) - s;
        let j = (lo / 3.0).floor();
        if hi > 3.0 * (j + 1.0) {
            return None;
        }
        index[a] = j as i64;
    }
    Some(GridCube { grid: *grid, level, index })
}

/// A grid cube `Q_a` from one of the shifted grids with `Q ⊂ Q_a` and
/// `|Q_a| <= 6^n |Q|`.
///
/// Levels are scanned from the finest one whose side is at least `l(Q)` up to
/// the finest one whose side is at least `3 l(Q)` (where a hit always exists),
/// so the first hit has the smallest volume.
pub fn cover_cube(q: &Cube) -> (ShiftedGrid, GridCube) {
    assert!(q.side > 0.0, "cover_cube: non-positive side");
    let grids = build_shifted_grids(q.n).expect("cover_cube: unsupported dimension");
    let finest_at_least = |len: f64| {
        let mut k = (-len.log2()).floor() as i32;
        while (-(k as f64)).exp2() < len {
            k -= 1;
        }
        while (-(k as f64 + 1.0)).exp2() >= len {
            k += 1;
        }
        k
    };
    let k_fine = finest_at_least(q.side);
    let k_cover = finest_at_least(3.0 * q.side);
    let bound = 6f64.powi(q.n as i32) * q.volume();
    for level in (k_cover - 1..=k_fine).rev() {
        for g in &grids {
            if let Some(c) = grid_cube_contains_free(level, g, q) {
                if c.volume() <= bound * (1.0 + 1e-12) {
                    return (*g, c);
                }
            }
        }
    }
    panic!("cover_cube: no covering grid cube for {q:?}; covering construction is broken");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        assert_eq!(build_shifted_grids(1).unwrap().len(), 3);
        let g2 = build_shifted_grids(2).unwrap();
        assert_eq!(g2.len(), 9);
        assert!(g2[0].is_standard());
        assert!(build_shifted_grids(3).is_err());
    }

    #[test]
    fn standard_grid_corners() {
        let g = ShiftedGrid::standard(1);
        let c = GridCube { grid: g, level: 3, index: [5, 0] };
        assert_eq!(c.corner()[0], 5.0 / 8.0);
        assert_eq!(c.side(), 0.125);
    }

    #[test]
    fn parent_by_corner_containment() {
        // oracle: enumerate level-2 cubes and find the one containing the
        // level-3 child's corner
        let g = ShiftedGrid::new(1, [1, 0]).unwrap();
        let child = GridCube { grid: g, level: 3, index: [5, 0] };
        let corner = child.corner()[0];
        let found: Vec<i64> = (-20..20)
            .filter(|&j| {
                let c = GridCube { grid: g, level: 2, index: [j, 0] }.rect();
                c.lo[0] <= corner + 1e-12 && corner + child.side() <= c.hi[0] + 1e-12
            })
            .collect();
        assert_eq!(found, vec![2]);
        assert_eq!(child.parent().index[0], 2);
        // the child index satisfies j' = 2j + (-1)^k 3a + {0,1}
        assert!(child.parent().children().contains(&child));
    }

    #[test]
    fn cover_aligned_cube_is_itself() {
        let q = Cube::new(1, [0.0, 0.0], 0.125);
        let (g, c) = cover_cube(&q);
        assert!(g.is_standard());
        assert_eq!(c, GridCube { grid: g, level: 3, index: [0, 0] });
        assert_eq!(c.volume() / q.volume(), 1.0);
    }

    fn enumerate_cover(q: &Cube) -> Vec<(ShiftedGrid, GridCube)> {
        let mut out = Vec::new();
        for g in build_shifted_grids(q.n).unwrap() {
            for level in -3..8 {
                for j in -200..200 {
                    let c = GridCube { grid: g, level, index: [j, 0] };
                    if c.rect().contains_rect(&q.rect()) && c.volume() <= 6.0 * q.volume() {
                        out.push((g, c));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn cover_generic_interval() {
        let q = Cube::new(1, [0.3, 0.0], 0.1);
        let (_, c) = cover_cube(&q);
        assert!(c.rect().contains_rect(&q.rect()));
        assert!(c.side() <= 0.6);
        assert!(!enumerate_cover(&q).is_empty());
    }

    #[test]
    fn cover_interval_straddling_zero_needs_shift() {
        let q = Cube::new(1, [-0.05, 0.0], 0.1);
        let all = enumerate_cover(&q);
        assert!(all.iter().all(|(g, _)| !g.is_standard()));
        let (g, c) = cover_cube(&q);
        assert!(!g.is_standard());
        assert!(c.rect().contains_rect(&q.rect()));
        assert!(c.side() <= 0.6);
    }

    #[test]
    fn locate_center_matches_float() {
        let lat = Lattice::new(1, 4).unwrap();
        for g in build_shifted_grids(1).unwrap() {
            for level in TOP_LEVEL..=4 {
                for i in 0..lat.per_axis() {
                    let j = g.locate_center(&lat, level, 0, i);
                    let c = GridCube { grid: g, level, index: [j, 0] };
                    assert!(c.rect().contains_point(&lat.center(i)));
                }
            }
        }
    }
}
