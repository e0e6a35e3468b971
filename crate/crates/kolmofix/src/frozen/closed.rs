//! Closed-form solution of the 1-D stationary equation with a uniformly
//! positive diffusion coefficient: with zero flux, `(a ρ)' - b ρ = 0`, so
//! `ρ(x) ∝ a(x)^{-1} exp(∫ b/a)`. The quadrature is a cumulative trapezoid
//! rule on a grid refined below the requested resolution, evaluated in log
//! space for overflow safety.

use crate::error::{Error, Result};
use crate::frozen::FrozenProblem;
use crate::measure::grid::{GridAxis, GridDensity};

/// Diffusion values at or below this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Sub-sampling factor for the quadrature grid.
const REFINE: usize = 8;

pub fn solve_1d_closed(problem: &FrozenProblem, axis: &GridAxis) -> Result<GridDensity> {
    if problem.field.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            op: "solve_1d_closed".into(),
            dim: problem.field.dim(),
            detail: "the closed-form backend handles one dimension only".into(),
        });
    }
    let bound = problem.field.bind(&problem.sigma)?;
    let n_fine = axis.cells * REFINE;
    let h = (axis.hi - axis.lo) / n_fine as f64;

    // Node samples of a and b on the refined grid (n_fine + 1 nodes).
    let mut a_vals = Vec::with_capacity(n_fine + 1);
    let mut drift_over_a = Vec::with_capacity(n_fine + 1);
    for k in 0..=n_fine {
        let x = axis.lo + k as f64 * h;
        let a = bound.eval_a(0, 0, &[x])?;
        if !a.is_finite() || a <= DEGENERACY_TOL {
            return Err(Error::DegenerateCoefficient {
                min_value: a,
                at: vec![x],
                hint: "diffusion is not uniformly positive on the domain; use the \
                       trajectory-averaging backend (solve_ergodic) instead"
                    .into(),
            });
        }
        let b = bound.eval_b(0, &[x])?;
        a_vals.push(a);
        drift_over_a.push(b / a);
    }

    // Cumulative trapezoid of b/a and the log-density at the nodes.
    let mut log_rho = Vec::with_capacity(n_fine + 1);
    let mut integral = 0.0f64;
    log_rho.push(-a_vals[0].ln());
    for k in 1..=n_fine {
        integral += 0.5 * h * (drift_over_a[k - 1] + drift_over_a[k]);
        log_rho.push(integral - a_vals[k].ln());
    }
    let peak = log_rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::NonFinite {
            what: "log-density".into(),
            point: vec![axis.lo],
        });
    }
    let rho: Vec<f64> = log_rho.iter().map(|l| (l - peak).exp()).collect();

    // Cell averages on the requested grid (trapezoid over each sub-cell),
    // then exact renormalization to a probability density.
    let mut values = Vec::with_capacity(axis.cells);
    for c in 0..axis.cells {
        let base = c * REFINE;
        let mut cell = 0.5 * (rho[base] + rho[base + REFINE]);
        for k in 1..REFINE {
            cell += rho[base + k];
        }
        values.push(cell / REFINE as f64);
    }
    let mass: f64 = values.iter().sum::<f64>() * axis.step();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::NonFinite {
            what: "density mass".into(),
            point: vec![axis.lo],
        });
    }
    for v in values.iter_mut() {
        *v /= mass;
    }
    GridDensity::new(vec![axis.clone()], values, true)
}
