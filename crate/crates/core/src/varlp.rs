//! Variable exponents, weights, modulars and Luxemburg norms.

use rand::Rng;

use crate::lattice::{Lattice, LatticeFunction, Rect};
use crate::report::{ProbeReport, Tally};
use crate::rng::stream;
use crate::{Error, Result};

const NORM_REL_TOL: f64 = 1e-10;
const NORM_MAX_ITER: usize = 200;

/// An exponent field `p(.)` with `1 < p_- <= p_+ < infinity`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentField {
    p: LatticeFunction,
    p_minus: f64,
    p_plus: f64,
}

impl ExponentField {
    pub fn new(p: LatticeFunction) -> Result<Self> {
        let (lo, hi) = (p.min(), p.max());
        if lo <= 1.0 + 1e-9 {
            return Err(Error::InvalidExponent(format!("p_- = {lo} must exceed 1")));
        }
        if hi >= 1e3 {
            return Err(Error::InvalidExponent(format!("p_+ = {hi} must be below 1e3")));
        }
        Ok(ExponentField { p, p_minus: lo, p_plus: hi })
    }

    pub fn constant(lat: Lattice, q: f64) -> Result<Self> {
        Self::new(LatticeFunction::constant(lat, q)?)
    }

    pub fn from_fn(lat: Lattice, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(LatticeFunction::from_fn(lat, f)?)
    }

    pub fn field(&self) -> &LatticeFunction {
        &self.p
    }

    pub fn values(&self) -> &[f64] {
        self.p.values()
    }

    pub fn lattice(&self) -> Lattice {
        self.p.lattice()
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn is_constant(&self) -> bool {
        self.p_minus == self.p_plus
    }

    /// `p'(x) = p(x) / (p(x) - 1)` cellwise.
    pub fn conjugate(&self) -> ExponentField {
        let q = self.p.map(|p| p / (p - 1.0)).expect("conjugate of a valid exponent is finite");
        ExponentField::new(q).expect("conjugate of a valid exponent is valid")
    }

    /// Extrema of `p` over cells meeting `region` with positive volume.
    pub fn bounds_on(&self, region: &Rect) -> Option<(f64, f64)> {
        let ov = self.lattice().overlaps(region);
        if ov.is_empty() {
            return None;
        }
        let vals = self.values();
        let lo = ov.iter().map(|&(c, _)| vals[c]).fold(f64::INFINITY, f64::min);
        let hi = ov.iter().map(|&(c, _)| vals[c]).fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }
}

/// A strictly positive weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    w: LatticeFunction,
}

impl WeightField {
    pub fn new(w: LatticeFunction) -> Result<Self> {
        if let Some(v) = w.values().iter().find(|&&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidWeight(format!("weight value {v} not in (0, inf)")));
        }
        Ok(WeightField { w })
    }

    pub fn constant(lat: Lattice, c: f64) -> Result<Self> {
        Self::new(LatticeFunction::constant(lat, c)?)
    }

    pub fn from_fn(lat: Lattice, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(LatticeFunction::from_fn(lat, f)?)
    }

    pub fn field(&self) -> &LatticeFunction {
        &self.w
    }

    pub fn values(&self) -> &[f64] {
        self.w.values()
    }

    pub fn lattice(&self) -> Lattice {
        self.w.lattice()
    }

    pub fn inverse(&self) -> WeightField {
        WeightField { w: self.w.map(|v| 1.0 / v).expect("inverse of a positive weight") }
    }

    pub fn is_unit(&self) -> bool {
        self.values().iter().all(|&v| v == 1.0)
    }

    /// `w(x)^{e(x)}` cellwise; rejects non-finite results.
    pub fn pow_field(&self, e: &LatticeFunction) -> Result<LatticeFunction> {
        self.w.check_same(e)?;
        let vals: Vec<f64> = self.values().iter().zip(e.values()).map(|(w, e)| w.powf(*e)).collect();
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::NonFinite("derived weight power".into()));
        }
        LatticeFunction::new(self.lattice(), vals)
    }

    /// `w^{p(.)}`, the weight of the modular.
    pub fn pow_p(&self, p: &ExponentField) -> Result<LatticeFunction> {
        self.pow_field(p.field())
    }

    /// `w^{-p'(.)}`, the dual weight.
    pub fn dual_pow(&self, p: &ExponentField) -> Result<LatticeFunction> {
        let e = p.conjugate().field().map(|q| -q)?;
        self.pow_field(&e)
    }
}

/// Per-cell modular terms `(|f_i|^{p_i} vol_i, p_i)` over `region`, in cell
/// order; zero terms are dropped.
fn modular_terms(f: &LatticeFunction, p: &ExponentField, region: Option<&Rect>) -> Result<Vec<(f64, f64)>> {
    f.check_same(p.field())?;
    let lat = f.lattice();
    let vals = f.values();
    let pv = p.values();
    let cells: Vec<(usize, f64)> = match region {
        Some(r) => lat.overlaps(r),
        None => (0..lat.len()).map(|c| (c, lat.cell_volume())).collect(),
    };
    Ok(cells
        .into_iter()
        .filter(|&(c, _)| vals[c] != 0.0)
        .map(|(c, vol)| (vals[c].abs().powf(pv[c]) * vol, pv[c]))
        .collect())
}

/// `rho(f) = integral of |f|^p`, optionally over a region.
pub fn modular(f: &LatticeFunction, p: &ExponentField, region: Option<&Rect>) -> Result<f64> {
    Ok(modular_terms(f, p, region)?.iter().map(|t| t.0).sum())
}

fn scaled_modular(terms: &[(f64, f64)], lambda: f64) -> f64 {
    terms.iter().map(|&(a, p)| a * lambda.powf(-p)).sum()
}

/// Luxemburg norm of `f` (over `region` if given).
pub fn luxemburg_norm_on(f: &LatticeFunction, p: &ExponentField, region: Option<&Rect>) -> Result<f64> {
    let terms = modular_terms(f, p, region)?;
    let rho: f64 = terms.iter().map(|t| t.0).sum();
    if rho == 0.0 {
        return Ok(0.0);
    }
    if !rho.is_finite() {
        return Err(Error::NonFinite(format!("modular {rho}")));
    }
    let (pl, pu) = match region {
        Some(r) => p.bounds_on(r).unwrap_or((p.p_minus(), p.p_plus())),
        None => (p.p_minus(), p.p_plus()),
    };
    // modular-norm bounds bracket the root
    let (a, b) = (rho.powf(1.0 / pu), rho.powf(1.0 / pl));
    let (mut lo, mut hi) = if rho >= 1.0 { (a, b) } else { (b, a) };
    lo *= 1.0 - 1e-9;
    hi *= 1.0 + 1e-9;
    while scaled_modular(&terms, lo) < 1.0 {
        lo *= 0.5;
    }
    while scaled_modular(&terms, hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..NORM_MAX_ITER {
        if hi - lo <= NORM_REL_TOL * 1e-2 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if scaled_modular(&terms, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn luxemburg_norm(f: &LatticeFunction, p: &ExponentField) -> Result<f64> {
    luxemburg_norm_on(f, p, None)
}

/// `||f||_{L^p_w} = ||f w||_{L^p}`.
pub fn weighted_norm_on(f: &LatticeFunction, p: &ExponentField, w: &WeightField, region: Option<&Rect>) -> Result<f64> {
    let fw = f.zip_map(w.field(), |a, b| a * b)?;
    luxemburg_norm_on(&fw, p, region)
}

pub fn weighted_norm(f: &LatticeFunction, p: &ExponentField, w: &WeightField) -> Result<f64> {
    weighted_norm_on(f, p, w, None)
}

/// Norm in the dual space `L^{p'}_{w^{-1}}`.
pub fn dual_weighted_norm(f: &LatticeFunction, p: &ExponentField, w: &WeightField) -> Result<f64> {
    let fw = f.zip_map(w.field(), |a, b| a / b)?;
    luxemburg_norm(&fw, &p.conjugate())
}

/// Outcome of the modular-norm comparison for one function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModularBounds {
    pub norm: f64,
    pub modular: f64,
    pub lower: f64,
    pub upper: f64,
    pub above_one: bool,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl ModularBounds {
    pub fn holds(&self, rel: f64) -> bool {
        self.lower <= self.norm * (1.0 + rel) && self.norm <= self.upper * (1.0 + rel)
    }
}

/// Evaluates `rho^{1/p_+} <= ||f|| <= rho^{1/p_-}` (norm above one) or the
/// reversed chain (norm at most one). With a region, both the norm and the
/// exponent bounds are taken over that region.
pub fn modular_norm_bounds(f: &LatticeFunction, p: &ExponentField, region: Option<&Rect>) -> Result<ModularBounds> {
    let norm = luxemburg_norm_on(f, p, region)?;
    let rho = modular(f, p, region)?;
    let (pl, pu) = match region {
        Some(r) => p.bounds_on(r).unwrap_or((p.p_minus(), p.p_plus())),
        None => (p.p_minus(), p.p_plus()),
    };
    let above_one = norm > 1.0;
    let (lower, upper) =
        if above_one { (rho.powf(1.0 / pu), rho.powf(1.0 / pl)) } else { (rho.powf(1.0 / pl), rho.powf(1.0 / pu)) };
    Ok(ModularBounds { norm, modular: rho, lower, upper, above_one, p_minus: pl, p_plus: pu })
}

pub fn check_modular_norm_bounds(f: &LatticeFunction, p: &ExponentField, region: Option<&Rect>) -> Result<ProbeReport> {
    let b = modular_norm_bounds(f, p, region)?;
    let mut rep = ProbeReport::new("modular_norm_bounds");
    let mut t = Tally::hard("chain");
    let ratio = (b.lower / b.norm).max(b.norm / b.upper);
    t.record(ratio, b.holds(1e-9));
    rep.metric("norm", b.norm)
        .metric("modular", b.modular)
        .metric("lower", b.lower)
        .metric("upper", b.upper)
        .metric("lower_slack", b.norm - b.lower)
        .metric("upper_slack", b.upper - b.norm)
        .label("branch", if b.above_one { "norm>1" } else { "norm<=1" })
        .label("scope", if region.is_some() { "local" } else { "global" })
        .push_check(&t);
    Ok(rep)
}

/// Checks `int |f g| <= 2 ||f||_{L^p_w} ||g||_{L^{p'}_{w^{-1}}}` and reports
/// the Hoelder ratio `int |fg| / (||f|| ||g||)`.
pub fn holder_pairing_check(
    f: &LatticeFunction,
    g: &LatticeFunction,
    p: &ExponentField,
    w: &WeightField,
) -> Result<ProbeReport> {
    let lhs = f.zip_map(g, |a, b| (a * b).abs())?.integral();
    let nf = weighted_norm(f, p, w)?;
    let ng = dual_weighted_norm(g, p, w)?;
    let prod = nf * ng;
    let mut rep = ProbeReport::new("holder_pairing");
    let mut t = Tally::hard("pairing");
    t.leq(lhs, 2.0 * prod, 1e-10, 1e-300);
    rep.metric("pairing", lhs)
        .metric("norm_f", nf)
        .metric("norm_g_dual", ng)
        .metric("holder_ratio", if prod > 0.0 { lhs / prod } else { 0.0 })
        .push_check(&t);
    Ok(rep)
}

/// Smallest constants `c_loc`, `c_inf` with
/// `|p(x)-p(y)| <= c_loc / log(e + 1/|x-y|)` and
/// `|p(x)-p_inf| <= c_inf / log(e + |x|)` over cell centers.
///
/// All pairs are visited when there are at most `1e7` of them; otherwise
/// `1e5` pairs are drawn from a fixed stream of `seed`.
pub fn log_holder_check(p: &ExponentField, p_inf: f64, c: f64, seed: u64) -> Result<ProbeReport> {
    let lat = p.lattice();
    let vals = p.values();
    let n = lat.len();
    let dist = |a: usize, b: usize| {
        let (x, y) = (lat.center(a), lat.center(b));
        (0..lat.n).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt()
    };
    let pair_c = |a: usize, b: usize| {
        let d = dist(a, b);
        (vals[a] - vals[b]).abs() * (std::f64::consts::E + 1.0 / d).ln()
    };
    let total_pairs = n * (n - 1) / 2;
    let exhaustive = total_pairs <= 10_000_000;
    let mut c_loc: f64 = 0.0;
    if exhaustive {
        for a in 0..n {
            for b in a + 1..n {
                c_loc = c_loc.max(pair_c(a, b));
            }
        }
    } else {
        let mut rng = stream(seed, "log_holder_pairs");
        for _ in 0..100_000 {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            c_loc = c_loc.max(pair_c(a, b));
        }
    }
    let c_inf = (0..n)
        .map(|a| {
            let x = lat.center(a);
            let r = (0..lat.n).map(|i| x[i] * x[i]).sum::<f64>().sqrt();
            (vals[a] - p_inf).abs() * (std::f64::consts::E + r).ln()
        })
        .fold(0.0, f64::max);
    let mut rep = ProbeReport::new("log_holder");
    let mut t = Tally::soft("admissible");
    let needed = c_loc.max(c_inf);
    t.record(
        if c > 0.0 {
            needed / c
        } else if needed > 0.0 {
            f64::INFINITY
        } else {
            0.0
        },
        needed <= c,
    );
    rep.metric("c_local", c_loc)
        .metric("c_infinity", c_inf)
        .metric("c_min", needed)
        .metric("c_given", c)
        .label("pairs", if exhaustive { "exhaustive" } else { "sampled_1e5" })
        .label("resolution", format!("n={},m={}", lat.n, lat.m))
        .push_check(&t);
    Ok(rep)
}
