//! Seeded, platform-independent random sources and random test inputs.
//!
//! Every consumer asks for a named stream so unrelated experiments sharing a
//! seed never share random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::lattice::{Lattice, LatticeFunction, Rect};

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Random nonnegative function supported in the support box `[0,1)^n`.
///
/// Draws one of several shapes so test corpora see smooth-ish, rough, blocky
/// and concentrated inputs.
pub fn random_support_function(lat: Lattice, rng: &mut StreamRng) -> LatticeFunction {
    let n = lat.n;
    let support = Rect::support_box(n);
    let cells = lat.cells_within(&support);
    let mut values = vec![0.0; lat.len()];
    match rng.gen_range(0..5) {
        0 => {
            for &c in &cells {
                values[c] = rng.gen::<f64>();
            }
        }
        1 => {
            // heavy tailed
            for &c in &cells {
                let u: f64 = rng.gen_range(1e-3..1.0);
                values[c] = u.powf(-0.7) - 1.0;
            }
        }
        2 => {
            let blocks = rng.gen_range(1..6);
            for _ in 0..blocks {
                let mut lo = [0.0; 2];
                let mut hi = [0.0; 2];
                for a in 0..n {
                    let x: f64 = rng.gen();
                    let y: f64 = rng.gen();
                    lo[a] = x.min(y).min(1.0 - lat.h());
                    hi[a] = x.max(y).max(lo[a] + lat.h()).min(1.0);
                }
                let height: f64 = rng.gen_range(0.1..10.0);
                let r = Rect::new(n, lo, hi);
                for (c, frac) in lat.overlaps(&r) {
                    values[c] += height * frac / lat.cell_volume();
                }
            }
        }
        3 => {
            let c = cells[rng.gen_range(0..cells.len())];
            values[c] = 1.0 / lat.cell_volume();
        }
        _ => {
            let keep: f64 = rng.gen_range(0.02..0.3);
            for &c in &cells {
                if rng.gen::<f64>() < keep {
                    values[c] = rng.gen_range(0.0..5.0);
                }
            }
        }
    }
    if values.iter().all(|&v| v == 0.0) {
        values[cells[0]] = 1.0;
    }
    LatticeFunction::new(lat, values).expect("random values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_separated() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, "x"), |r, _| Some(r.gen())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, "x"), |r, _| Some(r.gen())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, "y"), |r, _| Some(r.gen())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_functions_live_on_support() {
        let lat = Lattice::new(2, 3).unwrap();
        let mut rng = stream(1, "f");
        for _ in 0..20 {
            let f = random_support_function(lat, &mut rng);
            assert!(f.is_nonnegative());
            assert!(f.integral() > 0.0);
            let outside = f.integral() - f.integrate(&Rect::support_box(2));
            assert!(outside.abs() < 1e-12);
        }
    }
}
