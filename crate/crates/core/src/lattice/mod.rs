//! Geometry and exact integration on the computational lattice.
//!
//! The computational box is `[-1, 2)^n`. At resolution `m` it is split into
//! `3 * 2^m` cells per axis of side `h = 2^-m`, so cell boundaries are the
//! dyadic points `-1 + i h`. Test functions are usually supported in the
//! support box `[0, 1)^n`, which leaves a margin of at least one unit on
//! every side.

mod grid;
mod prefix;
pub mod tree;

pub use grid::{build_shifted_grids, cover_cube, GridCube, ShiftedGrid, TOP_LEVEL};
pub use prefix::PrefixIntegral;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower corner of the computational box along every axis.
pub const BOX_LOWER: f64 = -1.0;
/// Side length of the computational box.
pub const BOX_SIDE: f64 = 3.0;

/// Resolution ceilings for the full maximal operator.
pub fn max_resolution(n: usize) -> u32 {
    if n == 1 {
        12
    } else {
        6
    }
}

/// An axis-aligned half-open box `[lo, hi)`; only the first `n` axes are used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub n: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(n: usize, lo: [f64; 2], hi: [f64; 2]) -> Self {
        Rect { n, lo, hi }
    }

    /// One-dimensional interval `[a, b)`.
    pub fn interval(a: f64, b: f64) -> Self {
        Rect { n: 1, lo: [a, 0.0], hi: [b, 0.0] }
    }

    /// The cube `[a, b)^n`.
    pub fn cube_span(n: usize, a: f64, b: f64) -> Self {
        Rect { n, lo: [a, a], hi: [b, b] }
    }

    pub fn computational_box(n: usize) -> Self {
        Self::cube_span(n, BOX_LOWER, BOX_LOWER + BOX_SIDE)
    }

    pub fn support_box(n: usize) -> Self {
        Self::cube_span(n, 0.0, 1.0)
    }

    pub fn volume(&self) -> f64 {
        (0..self.n).map(|a| (self.hi[a] - self.lo[a]).max(0.0)).product()
    }

    pub fn contains_point(&self, x: &[f64; 2]) -> bool {
        (0..self.n).all(|a| self.lo[a] <= x[a] && x[a] < self.hi[a])
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        (0..self.n).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let mut out = *self;
        for a in 0..self.n {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]);
            if out.hi[a] <= out.lo[a] {
                return None;
            }
        }
        Some(out)
    }
}

/// A free cube: lower corner and side length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub n: usize,
    pub corner: [f64; 2],
    pub side: f64,
}

impl Cube {
    pub fn new(n: usize, corner: [f64; 2], side: f64) -> Self {
        Cube { n, corner, side }
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.n as i32)
    }

    pub fn rect(&self) -> Rect {
        let mut hi = [0.0; 2];
        for a in 0..self.n {
            hi[a] = self.corner[a] + self.side;
        }
        Rect { n: self.n, lo: self.corner, hi }
    }
}

/// The uniform lattice at resolution `m` over the computational box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub n: usize,
    pub m: u32,
}

impl Lattice {
    pub fn new(n: usize, m: u32) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if m > 24 {
            return Err(Error::ResolutionTooFine { n, m, max: 24 });
        }
        Ok(Lattice { n, m })
    }

    /// Cells per axis.
    pub fn per_axis(&self) -> usize {
        3usize << self.m
    }

    pub fn len(&self) -> usize {
        self.per_axis().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell side `h = 2^-m`.
    pub fn h(&self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    /// Multi-index of a flat (row-major) cell index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.n == 1 {
            [flat, 0]
        } else {
            let k = self.per_axis();
            [flat / k, flat % k]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.n == 1 {
            idx[0]
        } else {
            idx[0] * self.per_axis() + idx[1]
        }
    }

    pub fn center_coord(&self, i: usize) -> f64 {
        BOX_LOWER + (i as f64 + 0.5) * self.h()
    }

    pub fn center(&self, flat: usize) -> [f64; 2] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 2];
        for a in 0..self.n {
            x[a] = self.center_coord(idx[a]);
        }
        x
    }

    pub fn cell_rect(&self, flat: usize) -> Rect {
        let idx = self.multi_index(flat);
        let h = self.h();
        let mut r = Rect { n: self.n, lo: [0.0; 2], hi: [0.0; 2] };
        for a in 0..self.n {
            r.lo[a] = BOX_LOWER + idx[a] as f64 * h;
            r.hi[a] = r.lo[a] + h;
        }
        r
    }

    /// Cells along one axis overlapping `[lo, hi)`, with overlap lengths.
    fn axis_overlaps(&self, lo: f64, hi: f64) -> Vec<(usize, f64)> {
        let h = self.h();
        let k = self.per_axis();
        let lo = lo.max(BOX_LOWER);
        let hi = hi.min(BOX_LOWER + BOX_SIDE);
        if hi <= lo {
            return Vec::new();
        }
        let first = (((lo - BOX_LOWER) / h).floor() as isize).clamp(0, k as isize - 1) as usize;
        let last = (((hi - BOX_LOWER) / h).ceil() as isize).clamp(1, k as isize) as usize;
        (first..last)
            .filter_map(|i| {
                let c0 = BOX_LOWER + i as f64 * h;
                let c1 = c0 + h;
                let ov = c1.min(hi) - c0.max(lo);
                (ov > 0.0).then_some((i, ov))
            })
            .collect()
    }

    /// Cells overlapping `region` with overlap volumes, in lexicographic order.
    pub fn overlaps(&self, region: &Rect) -> Vec<(usize, f64)> {
        let ax0 = self.axis_overlaps(region.lo[0], region.hi[0]);
        if self.n == 1 {
            return ax0;
        }
        let ax1 = self.axis_overlaps(region.lo[1], region.hi[1]);
        let mut out = Vec::with_capacity(ax0.len() * ax1.len());
        for &(i0, v0) in &ax0 {
            for &(i1, v1) in &ax1 {
                out.push((self.flat_index([i0, i1]), v0 * v1));
            }
        }
        out
    }

    /// Flat indices of the cells whose center lies in `region`, lexicographic.
    pub fn cells_with_center_in(&self, region: &Rect) -> Vec<usize> {
        let h = self.h();
        let k = self.per_axis() as isize;
        let range = |a: usize| {
            let first = ((region.lo[a] - BOX_LOWER) / h - 0.5).ceil() as isize;
            let last = ((region.hi[a] - BOX_LOWER) / h - 0.5).ceil() as isize;
            let (first, last) = (first.clamp(0, k), last.clamp(0, k));
            (first as usize..last as usize).filter(move |&i| {
                let c = self.center_coord(i);
                region.lo[a] <= c && c < region.hi[a]
            })
        };
        if self.n == 1 {
            return range(0).collect();
        }
        let r1: Vec<usize> = range(1).collect();
        range(0).flat_map(|i0| r1.iter().map(move |&i1| self.flat_index([i0, i1]))).collect()
    }

    /// Flat indices of the cells whose closure lies inside `region` (used for
    /// lattice-aligned regions).
    pub fn cells_within(&self, region: &Rect) -> Vec<usize> {
        let cv = self.cell_volume();
        self.overlaps(region).into_iter().filter(|&(_, v)| v >= cv * (1.0 - 1e-12)).map(|(i, _)| i).collect()
    }
}

/// A piecewise-constant function on the lattice, extended by zero outside
/// the computational box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeFunction {
    lattice: Lattice,
    values: Vec<f64>,
    nonnegative: bool,
}

/// Wire form: `{n, m, box, values, nonnegative}`.
#[derive(Serialize, Deserialize)]
struct LatticeFunctionWire {
    n: usize,
    m: u32,
    #[serde(rename = "box")]
    bbox: BoxWire,
    values: Vec<f64>,
    nonnegative: bool,
}

#[derive(Serialize, Deserialize)]
struct BoxWire {
    lower: f64,
    side: f64,
}

impl LatticeFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch(format!("expected {} values, got {}", lattice.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cell {i} has value {}", values[i])));
        }
        let nonnegative = values.iter().all(|&v| v >= 0.0);
        Ok(LatticeFunction { lattice, values, nonnegative })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        LatticeFunction { lattice, values: vec![0.0; lattice.len()], nonnegative: true }
    }

    pub fn constant(lattice: Lattice, c: f64) -> Result<Self> {
        Self::new(lattice, vec![c; lattice.len()])
    }

    /// Values from a function of the cell center.
    pub fn from_fn(lattice: Lattice, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..lattice.len()).map(|i| f(lattice.center(i))).collect();
        Self::new(lattice, values)
    }

    /// `c * chi_region`, projected onto the lattice by cell averages.
    pub fn indicator(lattice: Lattice, region: &Rect, c: f64) -> Result<Self> {
        let mut values = vec![0.0; lattice.len()];
        let cv = lattice.cell_volume();
        for (i, v) in lattice.overlaps(region) {
            values[i] = c * v / cv;
        }
        Self::new(lattice, values)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cellwise map; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.lattice, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        Self::new(self.lattice, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn abs(&self) -> Self {
        LatticeFunction {
            lattice: self.lattice,
            values: self.values.iter().map(|v| v.abs()).collect(),
            nonnegative: true,
        }
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch(format!("{:?} vs {:?}", self.lattice, other.lattice)));
        }
        Ok(())
    }

    /// Exact integral over `region` (clipped to the box).
    pub fn integrate(&self, region: &Rect) -> f64 {
        self.lattice.overlaps(region).iter().map(|&(i, v)| self.values[i] * v).sum()
    }

    /// Exact integral over the whole box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.lattice.cell_volume()
    }

    /// `(1/|Q|) \int_Q f`.
    pub fn average(&self, region: &Rect) -> Result<f64> {
        let vol = region.volume();
        if vol <= 0.0 {
            return Err(Error::ZeroVolume);
        }
        Ok(self.integrate(region) / vol)
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = LatticeFunctionWire {
            n: self.lattice.n,
            m: self.lattice.m,
            bbox: BoxWire { lower: BOX_LOWER, side: BOX_SIDE },
            values: self.values.clone(),
            nonnegative: self.nonnegative,
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let wire: LatticeFunctionWire = serde_json::from_str(s)?;
        if wire.bbox.lower != BOX_LOWER || wire.bbox.side != BOX_SIDE {
            return Err(Error::LatticeMismatch("unexpected computational box".into()));
        }
        let f = Self::new(Lattice::new(wire.n, wire.m)?, wire.values)?;
        if wire.nonnegative && !f.nonnegative {
            return Err(Error::InvalidParameter("nonnegative flag set on negative data".into()));
        }
        Ok(f)
    }

    /// CSV rows `i0[,i1],value` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.lattice.n == 1 { "i0,value\n" } else { "i0,i1,value\n" });
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.lattice.multi_index(flat);
            if self.lattice.n == 1 {
                out.push_str(&format!("{},{:e}\n", idx[0], v));
            } else {
                out.push_str(&format!("{},{},{:e}\n", idx[0], idx[1], v));
            }
        }
        out
    }
}
