//! Computational toolkit for weighted variable-exponent Lebesgue spaces.
//!
//! Functions live on a uniform binary lattice over the computational box
//! `[-1, 2)^n` (`n` = 1 or 2) and are piecewise constant on its cells, so every
//! integral over an axis-aligned region is computed exactly by clipping cells.
//! On top of that sit Luxemburg norms, the three maximal operators, shifted
//! dyadic grids, stopping-time and sparse decompositions, Muckenhoupt-type
//! weight probes and a set of numerical experiments around duality of the
//! maximal operator.

pub mod czsparse;
pub mod duallab;
pub mod error;
pub mod lattice;
pub mod maximal;
pub mod presets;
pub mod report;
pub mod rng;
pub mod suite;
pub mod varlp;
pub mod weights;

pub use error::{Error, Result};
