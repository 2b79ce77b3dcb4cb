//! Named exponents, weights, functions and spaces, parsed from short strings
//! such as `const:2`, `loghold:2,1,0` or `power-weight:0.125`.
//!
//! Exponent presets depending on position read `x1` clamped to the support
//! interval `[0, 1]`, so they stay in the documented range on the whole box.

use std::f64::consts::E;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lattice::{Lattice, LatticeFunction, Rect};
use crate::rng::{random_support_function, stream};
use crate::varlp::{ExponentField, WeightField};
use crate::{Error, Result};

fn parse_args(s: &str) -> Result<(String, Vec<f64>)> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let args = if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::UnknownPreset(format!("bad number in {s:?}"))))
            .collect::<Result<_>>()?
    };
    Ok((name.trim().to_string(), args))
}

fn arity(s: &str, args: &[f64], lo: usize, hi: usize) -> Result<()> {
    if args.len() < lo || args.len() > hi {
        return Err(Error::UnknownPreset(format!("{s:?}: expected {lo}..={hi} arguments")));
    }
    Ok(())
}

fn dist(x: [f64; 2], x0: f64, n: usize) -> f64 {
    (0..n).map(|a| (x[a] - x0).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExponentPreset {
    Const(f64),
    /// `a + b * clamp(x1, 0, 1)`.
    Affine {
        a: f64,
        b: f64,
    },
    /// `a + b / ln(e + 1/|x - x0|)` with `x0` on the diagonal.
    LogHolder {
        a: f64,
        b: f64,
        x0: f64,
    },
}

impl ExponentPreset {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, v) = parse_args(s)?;
        match name.as_str() {
            "const" => arity(s, &v, 1, 1).map(|_| ExponentPreset::Const(v[0])),
            "affine" => arity(s, &v, 2, 2).map(|_| ExponentPreset::Affine { a: v[0], b: v[1] }),
            "loghold" => arity(s, &v, 2, 3).map(|_| ExponentPreset::LogHolder {
                a: v[0],
                b: v[1],
                x0: v.get(2).copied().unwrap_or(0.0),
            }),
            _ => Err(Error::UnknownPreset(format!("exponent {s:?}"))),
        }
    }

    pub fn build(&self, lat: Lattice) -> Result<ExponentField> {
        let n = lat.n;
        match *self {
            ExponentPreset::Const(q) => ExponentField::constant(lat, q),
            ExponentPreset::Affine { a, b } => ExponentField::from_fn(lat, |x| a + b * x[0].clamp(0.0, 1.0)),
            ExponentPreset::LogHolder { a, b, x0 } => ExponentField::from_fn(lat, |x| {
                let d = dist(x, x0, n);
                if d == 0.0 {
                    a
                } else {
                    a + b / (E + 1.0 / d).ln()
                }
            }),
        }
    }
}

impl fmt::Display for ExponentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentPreset::Const(q) => write!(f, "const:{q}"),
            ExponentPreset::Affine { a, b } => write!(f, "affine:{a},{b}"),
            ExponentPreset::LogHolder { a, b, x0 } => write!(f, "loghold:{a},{b},{x0}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightPreset {
    Const(f64),
    /// `|x - x0|^a`, Euclidean distance to the diagonal point `x0`.
    Power {
        a: f64,
        x0: f64,
    },
}

impl WeightPreset {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, v) = parse_args(s)?;
        match name.as_str() {
            "const" => arity(s, &v, 1, 1).map(|_| WeightPreset::Const(v[0])),
            "power-weight" => {
                arity(s, &v, 1, 2).map(|_| WeightPreset::Power { a: v[0], x0: v.get(1).copied().unwrap_or(0.5) })
            }
            _ => Err(Error::UnknownPreset(format!("weight {s:?}"))),
        }
    }

    pub fn build(&self, lat: Lattice) -> Result<WeightField> {
        let n = lat.n;
        match *self {
            WeightPreset::Const(c) => WeightField::constant(lat, c),
            WeightPreset::Power { a, x0 } => WeightField::from_fn(lat, |x| dist(x, x0, n).powf(a)),
        }
    }
}

impl fmt::Display for WeightPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightPreset::Const(c) => write!(f, "const:{c}"),
            WeightPreset::Power { a, x0 } => write!(f, "power-weight:{a},{x0}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FunctionPreset {
    /// `c` on the support box.
    Const(f64),
    /// `c` on `[a, b)^n`.
    Step {
        c: f64,
        a: f64,
        b: f64,
    },
    /// `|x - x0|^{-beta}` on the support box.
    Spike {
        beta: f64,
        x0: f64,
    },
    Random(u64),
}

impl FunctionPreset {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, v) = parse_args(s)?;
        match name.as_str() {
            "const" => arity(s, &v, 1, 1).map(|_| FunctionPreset::Const(v[0])),
            "step" => arity(s, &v, 3, 3).map(|_| FunctionPreset::Step { c: v[0], a: v[1], b: v[2] }),
            "spike" => {
                arity(s, &v, 1, 2).map(|_| FunctionPreset::Spike { beta: v[0], x0: v.get(1).copied().unwrap_or(0.5) })
            }
            "random" => {
                arity(s, &v, 1, 1)?;
                if v[0] < 0.0 || v[0].fract() != 0.0 {
                    return Err(Error::UnknownPreset(format!("random seed must be a nonnegative integer: {s:?}")));
                }
                Ok(FunctionPreset::Random(v[0] as u64))
            }
            _ => Err(Error::UnknownPreset(format!("function {s:?}"))),
        }
    }

    pub fn build(&self, lat: Lattice) -> Result<LatticeFunction> {
        let n = lat.n;
        match *self {
            FunctionPreset::Const(c) => LatticeFunction::indicator(lat, &Rect::support_box(n), c),
            FunctionPreset::Step { c, a, b } => {
                if !(a < b) {
                    return Err(Error::InvalidParameter(format!("step needs a < b, got [{a}, {b})")));
                }
                LatticeFunction::indicator(lat, &Rect::cube_span(n, a, b), c)
            }
            FunctionPreset::Spike { beta, x0 } => {
                let support = Rect::support_box(n);
                LatticeFunction::from_fn(
                    lat,
                    |x| {
                        if support.contains_point(&x) {
                            dist(x, x0, n).powf(-beta)
                        } else {
                            0.0
                        }
                    },
                )
            }
            FunctionPreset::Random(seed) => Ok(random_support_function(lat, &mut stream(seed, "function_preset"))),
        }
    }
}

impl fmt::Display for FunctionPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionPreset::Const(c) => write!(f, "const:{c}"),
            FunctionPreset::Step { c, a, b } => write!(f, "step:{c},{a},{b}"),
            FunctionPreset::Spike { beta, x0 } => write!(f, "spike:{beta},{x0}"),
            FunctionPreset::Random(s) => write!(f, "random:{s}"),
        }
    }
}

/// An `(exponent, weight)` pair that can be realized at any resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacePreset {
    pub name: String,
    pub exponent: ExponentPreset,
    pub weight: WeightPreset,
}

impl SpacePreset {
    pub fn new(name: &str, exponent: &str, weight: &str) -> Result<Self> {
        Ok(SpacePreset {
            name: name.to_string(),
            exponent: ExponentPreset::parse(exponent)?,
            weight: WeightPreset::parse(weight)?,
        })
    }

    /// `calibration` (p = 2, w = 1), `loghold` (log-Hölder p, w = |x-1/2|^{1/8})
    /// and `adversarial` (p = 2, w = |x-1/2|^{-0.9}, outside A_2).
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "calibration" => Self::new(name, "const:2", "const:1"),
            "loghold" => Self::new(name, "loghold:2,1,0", "power-weight:0.125"),
            "adversarial" => Self::new(name, "const:2", "power-weight:-0.9"),
            _ => Err(Error::UnknownPreset(format!("space {name:?}"))),
        }
    }

    pub fn build(&self, lat: Lattice) -> Result<(ExponentField, WeightField)> {
        Ok((self.exponent.build(lat)?, self.weight.build(lat)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::varlp::luxemburg_norm;

    #[test]
    fn parse_round_trip() {
        for s in ["const:2", "affine:2,0.25", "loghold:2,1,0"] {
            assert_eq!(ExponentPreset::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(WeightPreset::parse("power-weight:0.125").unwrap(), WeightPreset::Power { a: 0.125, x0: 0.5 });
        assert!(matches!(ExponentPreset::parse("cubic:1"), Err(Error::UnknownPreset(_))));
        assert!(matches!(FunctionPreset::parse("step:1,2"), Err(Error::UnknownPreset(_))));
        assert!(SpacePreset::named("nope").is_err());
    }

    #[test]
    fn step_norm_example() {
        let lat = Lattice::new(1, 8).unwrap();
        let f = FunctionPreset::parse("step:2,0,0.25").unwrap().build(lat).unwrap();
        let p = ExponentPreset::Const(2.0).build(lat).unwrap();
        assert!((luxemburg_norm(&f, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn named_spaces_build() {
        for m in [6, 10] {
            let lat = Lattice::new(1, m).unwrap();
            for name in ["calibration", "loghold", "adversarial"] {
                let (p, w) = SpacePreset::named(name).unwrap().build(lat).unwrap();
                assert!(p.p_minus() >= 2.0 && p.p_plus() <= 3.0);
                assert!(w.values().iter().all(|v| v.is_finite() && *v > 0.0));
            }
        }
    }
}
