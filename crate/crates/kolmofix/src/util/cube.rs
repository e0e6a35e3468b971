//! Axis-aligned boxes and midpoint sampling grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A closed axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cube {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::config("cube bounds must be non-empty and of equal length"));
        }
        for i in 0..lo.len() {
            if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::config(format!(
                    "cube axis {i} must satisfy lo < hi with finite bounds (got [{}, {}])",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Cube { lo, hi })
    }

    /// The symmetric cube `[-r, r]^dim`.
    pub fn symmetric(radius: f64, dim: usize) -> Result<Self> {
        Cube::new(vec![-radius; dim], vec![radius; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    /// Shrink every face inward by `margin` (must leave positive width).
    pub fn shrunk(&self, margin: f64) -> Result<Cube> {
        Cube::new(
            self.lo.iter().map(|l| l + margin).collect(),
            self.hi.iter().map(|h| h - margin).collect(),
        )
    }

    /// Grow every face outward by `margin`.
    pub fn enlarged(&self, margin: f64) -> Result<Cube> {
        Cube::new(
            self.lo.iter().map(|l| l - margin).collect(),
            self.hi.iter().map(|h| h + margin).collect(),
        )
    }

    /// Smallest distance from the boundary of `inner` to the boundary of
    /// `self`, assuming `inner` sits inside `self`; negative if it does not.
    pub fn boundary_margin(&self, inner: &Cube) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.dim() {
            m = m.min(inner.lo[i] - self.lo[i]);
            m = m.min(self.hi[i] - inner.hi[i]);
        }
        m
    }

    /// Visit the midpoints of the uniform `cells_per_axis^dim` partition.
    ///
    /// Points are visited in row-major order (first axis slowest); the
    /// callback receives the midpoint coordinates in a reused scratch buffer.
    pub fn for_each_midpoint(&self, cells_per_axis: usize, mut f: impl FnMut(&[f64])) {
        let d = self.dim();
        let widths = self.widths();
        let steps: Vec<f64> = widths.iter().map(|w| w / cells_per_axis as f64).collect();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        let total = (cells_per_axis as u128).pow(d as u32);
        let mut count: u128 = 0;
        while count < total {
            for k in 0..d {
                x[k] = self.lo[k] + (idx[k] as f64 + 0.5) * steps[k];
            }
            f(&x);
            // Odometer increment, last axis fastest.
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < cells_per_axis {
                    break;
                }
                idx[k] = 0;
            }
            count += 1;
        }
    }

    /// Collect the midpoint grid into a flat `n x dim` buffer.
    pub fn midpoint_grid(&self, cells_per_axis: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(cells_per_axis.pow(self.dim() as u32) * self.dim());
        self.for_each_midpoint(cells_per_axis, |x| out.extend_from_slice(x));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_cover_the_cube_in_row_major_order() {
        let c = Cube::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let grid = c.midpoint_grid(2);
        assert_eq!(
            grid,
            vec![0.25, 12.5, 0.25, 17.5, 0.75, 12.5, 0.75, 17.5],
        );
    }

    #[test]
    fn margins_shrink_and_grow() {
        let c = Cube::symmetric(2.0, 1).unwrap();
        assert_eq!(c.shrunk(0.5).unwrap(), Cube::new(vec![-1.5], vec![1.5]).unwrap());
        assert_eq!(c.enlarged(1.0).unwrap(), Cube::new(vec![-3.0], vec![3.0]).unwrap());
        assert!(c.shrunk(2.5).is_err());
        let inner = Cube::symmetric(1.0, 1).unwrap();
        assert_eq!(c.boundary_margin(&inner), 1.0);
    }

    #[test]
    fn contains_checks_all_axes() {
        let c = Cube::symmetric(1.0, 2).unwrap();
        assert!(c.contains(&[0.5, -1.0]));
        assert!(!c.contains(&[0.5, -1.1]));
        assert!(!c.contains(&[0.5]));
    }
}
