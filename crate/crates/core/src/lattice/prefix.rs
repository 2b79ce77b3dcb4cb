//! Cumulative integrals for O(1) box integrals of a fixed function.

use super::{LatticeFunction, Rect, BOX_LOWER};

/// Summed-area table of a lattice function. Box integrals are exact up to
/// floating-point cancellation in the differences (relative to the total mass).
#[derive(Clone, Debug)]
pub struct PrefixIntegral {
    n: usize,
    k: usize,
    h: f64,
    cells: Vec<f64>,
    prefix: Vec<f64>,
}

impl PrefixIntegral {
    pub fn new(f: &LatticeFunction) -> Self {
        let lat = f.lattice();
        let k = lat.per_axis();
        let cv = lat.cell_volume();
        let cells: Vec<f64> = f.values().iter().map(|v| v * cv).collect();
        let prefix = if lat.n == 1 {
            let mut p = vec![0.0; k + 1];
            for i in 0..k {
                p[i + 1] = p[i] + cells[i];
            }
            p
        } else {
            let w = k + 1;
            let mut p = vec![0.0; w * w];
            for i in 0..k {
                let mut row = 0.0;
                for j in 0..k {
                    row += cells[i * k + j];
                    p[(i + 1) * w + j + 1] = p[i * w + j + 1] + row;
                }
            }
            p
        };
        PrefixIntegral { n: lat.n, k, h: lat.h(), cells, prefix }
    }

    fn split(&self, x: f64) -> (usize, f64) {
        let u = ((x - BOX_LOWER) / self.h).clamp(0.0, self.k as f64);
        let i = (u.floor() as usize).min(self.k - 1);
        (i, u - i as f64)
    }

    fn cumulative(&self, x: [f64; 2]) -> f64 {
        let (i, fx) = self.split(x[0]);
        if self.n == 1 {
            return self.prefix[i] + fx * self.cells[i];
        }
        let (j, fy) = self.split(x[1]);
        let w = self.k + 1;
        let p = |a: usize, b: usize| self.prefix[a * w + b];
        p(i, j) + fx * (p(i + 1, j) - p(i, j)) + fy * (p(i, j + 1) - p(i, j)) + fx * fy * self.cells[i * self.k + j]
    }

    pub fn integrate(&self, r: &Rect) -> f64 {
        if r.hi[0] <= r.lo[0] || (self.n == 2 && r.hi[1] <= r.lo[1]) {
            return 0.0;
        }
        if self.n == 1 {
            return self.cumulative(r.hi) - self.cumulative(r.lo);
        }
        self.cumulative([r.hi[0], r.hi[1]]) - self.cumulative([r.lo[0], r.hi[1]]) - self.cumulative([r.hi[0], r.lo[1]])
            + self.cumulative([r.lo[0], r.lo[1]])
    }

    pub fn average(&self, r: &Rect) -> f64 {
        self.integrate(r) / r.volume()
    }
}
