//! Measures, their invariants, and the measure-level operations: moments,
//! growth-gauge integrals, order-1 transport distance, weak gaps against a
//! test battery, cutoff compensation, block projections, and kernel density
//! norms.

pub mod discrete;
pub mod families;
pub mod grid;
pub mod io;
pub mod kde;
pub mod ops;
pub mod wasserstein;

pub use discrete::DiscreteMeasure;
pub use grid::{GridAxis, GridDensity};

use crate::error::{Error, Result};
use crate::func::C2Fn;
use crate::util::bump::radial_cutoff;
use std::sync::Arc;

/// Which power-moment functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentKind {
    /// `∫ Σ_i |x_i|^p dμ` (componentwise absolute moments, summed).
    Abs,
    /// `∫ ‖x‖_2^p dμ`.
    Radial,
    /// `∫ x_i^p dμ` (signed), 0-based coordinate.
    Component(usize),
}

/// A measure in either representation.
#[derive(Debug, Clone)]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Grid(GridDensity),
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

impl From<GridDensity> for Measure {
    fn from(g: GridDensity) -> Self {
        Measure::Grid(g)
    }
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Measure::Discrete(m) => m.mass(),
            Measure::Grid(g) => g.mass(),
        }
    }

    pub fn is_probability(&self) -> bool {
        match self {
            Measure::Discrete(m) => m.is_probability(),
            Measure::Grid(g) => g.is_probability(),
        }
    }

    /// Deterministic pairwise integral of `f` against the measure (grid
    /// densities integrate by the midpoint rule over cells).
    pub fn integrate(&self, f: impl FnMut(&[f64]) -> f64) -> f64 {
        match self {
            Measure::Discrete(m) => m.integrate(f),
            Measure::Grid(g) => g.integrate(f),
        }
    }

    /// Atom-cloud view (grid cells become atoms at centers).
    pub fn to_atoms(&self) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => Ok(m.clone()),
            Measure::Grid(g) => g.to_atoms(),
        }
    }

    /// One-dimensional marginal along coordinate `i`, as atoms.
    pub fn marginal_atoms(&self, i: usize) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => m.marginal(i),
            Measure::Grid(g) => g.marginal(i)?.to_atoms(),
        }
    }

    /// Number of support elements (atoms or cells).
    pub fn support_size(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.n_atoms(),
            Measure::Grid(g) => g.n_cells(),
        }
    }
}

/// The admissible class: measures with `∫ V dμ <= R`.
#[derive(Clone)]
pub struct MeasureClassConfig {
    pub v: Arc<dyn C2Fn>,
    pub r: f64,
}

impl MeasureClassConfig {
    pub fn new(v: Arc<dyn C2Fn>, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::config("moment budget R must be positive and finite"));
        }
        Ok(MeasureClassConfig { v, r })
    }
}

/// Radial cutoff data for localized solves: the cutoff is 1 on the ball of
/// radius `n`, 0 outside radius `n + 1`, smooth in between.
#[derive(Clone)]
pub struct TruncationScheme {
    pub n: f64,
    pub lambda: f64,
    pub v: Arc<dyn C2Fn>,
}

impl TruncationScheme {
    pub fn new(n: f64, lambda: f64, v: Arc<dyn C2Fn>) -> Result<Self> {
        if !(n > 0.0) || !(lambda > 0.0) {
            return Err(Error::config(
                "truncation radius n and decay rate lambda must be positive",
            ));
        }
        Ok(TruncationScheme { n, lambda, v })
    }

    /// Cutoff value at `x`.
    pub fn cutoff(&self, x: &[f64]) -> f64 {
        radial_cutoff(x, self.n, self.n + 1.0)
    }
}

/// How cutoff-removed mass is handled when truncating a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompensateVariant {
    /// Removed mass is returned as an atom at the origin (total mass stays 1).
    OriginAtom,
    /// Removed mass is dropped (sub-probability result).
    None,
}

/// Data for projecting onto the leading `m` coordinates against a weight in
/// the remaining ones.
#[derive(Clone)]
pub struct ProjectionWindow {
    /// Number of leading coordinates kept.
    pub m: usize,
    /// Weight on the trailing block, mapping into `[0, 1]`.
    pub eta: Arc<dyn crate::func::ScalarFn>,
    /// Cube in the leading block where density norms are measured.
    pub k_y: crate::util::cube::Cube,
    /// Enlarged cube used by mollification margins.
    pub q_y: crate::util::cube::Cube,
    /// Integrability exponent for the projected density.
    pub r: f64,
    /// Norm budget defining membership in the projected class.
    pub s: f64,
}
