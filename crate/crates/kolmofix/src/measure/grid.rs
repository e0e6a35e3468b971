//! Cell-averaged densities on tensor grids.

use crate::error::{Error, Result};
use crate::measure::discrete::DiscreteMeasure;
use crate::util::sum::{pairwise_sum, pairwise_sum_fn};
use serde::{Deserialize, Serialize};

/// Mass tolerance for grid densities flagged as probabilities.
pub const GRID_MASS_TOL: f64 = 1e-9;

/// One uniform grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || cells == 0 {
            return Err(Error::config(format!(
                "grid axis needs finite lo < hi and cells >= 1 (got [{lo}, {hi}] x {cells})"
            )));
        }
        Ok(GridAxis { lo, hi, cells })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.step()
    }

    /// Cell index containing `x`, clamped into range.
    pub fn cell_of(&self, x: f64) -> usize {
        let raw = ((x - self.lo) / self.step()).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.cells - 1)
        }
    }
}

/// A nonnegative density given by cell averages on a tensor grid.
///
/// Values are stored row-major with the FIRST axis slowest. Mass is the
/// pairwise sum of `value x cell volume`; probability densities must carry
/// mass 1 within `1e-9` at construction and are never silently renormalized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDensity {
    axes: Vec<GridAxis>,
    values: Vec<f64>,
    probability: bool,
}

impl GridDensity {
    pub fn new(axes: Vec<GridAxis>, values: Vec<f64>, probability: bool) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("grid density needs at least one axis"));
        }
        let n: usize = axes.iter().map(|a| a.cells).product();
        if values.len() != n {
            return Err(Error::config(format!(
                "value buffer has {} entries but the grid has {} cells",
                values.len(),
                n
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "cell {i} has value {v}; grid densities must be finite and nonnegative"
                )));
            }
        }
        let g = GridDensity {
            axes,
            values,
            probability,
        };
        let mass = g.mass();
        if probability && (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::config(format!(
                "probability grid density has mass {mass}; |mass - 1| must be <= {GRID_MASS_TOL:e}"
            )));
        }
        if !probability && !(mass > 0.0) {
            return Err(Error::config("grid density must have positive mass"));
        }
        Ok(g)
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_probability(&self) -> bool {
        self.probability
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }

    pub fn mass(&self) -> f64 {
        let vol = self.cell_volume();
        pairwise_sum(&self.values) * vol
    }

    /// Multi-index of flat cell `idx` (first axis slowest).
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.axes[k].cells;
            idx /= self.axes[k].cells;
        }
    }

    /// Center coordinates of flat cell `idx`.
    pub fn cell_center(&self, idx: usize, out: &mut [f64]) {
        let d = self.dim();
        let mut rem = idx;
        for k in (0..d).rev() {
            let i = rem % self.axes[k].cells;
            rem /= self.axes[k].cells;
            out[k] = self.axes[k].center(i);
        }
    }

    /// Flat index from per-axis cell indices.
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for k in 0..self.dim() {
            flat = flat * self.axes[k].cells + idx[k];
        }
        flat
    }

    /// Deterministic pairwise integral `sum_cells value * vol * f(center)`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let vol = self.cell_volume();
        let d = self.dim();
        let mut x = vec![0.0f64; d];
        pairwise_sum_fn(self.n_cells(), &mut |i| {
            self.cell_center(i, &mut x);
            self.values[i] * f(&x)
        }) * vol
    }

    /// Atom cloud at cell centers with cell masses as weights. Sub-cell
    /// structure is lost (resolution `O(step)`).
    pub fn to_atoms(&self) -> Result<DiscreteMeasure> {
        let vol = self.cell_volume();
        let d = self.dim();
        let mut pts = Vec::with_capacity(self.n_cells() * d);
        let mut x = vec![0.0f64; d];
        for i in 0..self.n_cells() {
            self.cell_center(i, &mut x);
            pts.extend_from_slice(&x);
        }
        let ws: Vec<f64> = self.values.iter().map(|v| v * vol).collect();
        if self.probability {
            // Cell masses of a unit-mass density can drift by tiny rounding;
            // atom validation is stricter (1e-12), so rescale the residual.
            let mass = pairwise_sum(&ws);
            let scale = 1.0 / mass;
            let ws: Vec<f64> = ws.iter().map(|w| w * scale).collect();
            DiscreteMeasure::probability(d, pts, ws)
        } else {
            DiscreteMeasure::sub_probability(d, pts, ws)
        }
    }

    /// One-dimensional marginal density along axis `i`.
    pub fn marginal(&self, i: usize) -> Result<GridDensity> {
        if i >= self.dim() {
            return Err(Error::config(format!(
                "marginal axis {i} out of range for dimension {}",
                self.dim()
            )));
        }
        let axis = self.axes[i];
        let mut vals = vec![0.0f64; axis.cells];
        let d = self.dim();
        let mut idx = vec![0usize; d];
        // Volume element of the integrated-out axes.
        let other_vol: f64 = (0..d).filter(|&k| k != i).map(|k| self.axes[k].step()).product();
        for flat in 0..self.n_cells() {
            self.unravel(flat, &mut idx);
            vals[idx[i]] += self.values[flat] * other_vol;
        }
        GridDensity::new(vec![axis], vals, self.probability)
    }
}
