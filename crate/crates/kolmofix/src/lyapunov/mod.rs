//! Numerical certification of drift conditions.
//!
//! A solution-independent gauge `V`, a measure-dependent gauge `W(x, μ)`,
//! and a comparison function `H` together with constants `(C, Λ, C₁, C₂)`
//! form a [`LyapunovSpec`]. The checkers in this module evaluate the
//! pointwise inequality `L_μV ≤ C − ΛV`, the integrated inequality
//! `∫L_μW dμ ≤ C − Λ∫V dμ`, the origin inequality
//! `−L_μW(0) ≤ C₁ + C₂∫H dμ`, and the moment bound `∫V dμ ≤ C/Λ` on
//! sampled grids and measure families. Every verdict is a sample, never a
//! certificate, and the reports say so.

pub mod checks;
pub mod exprfn;
pub mod generator;

pub use checks::{check_h32, check_integral, check_pointwise, integral_drift, verify_moment_bound};
pub use exprfn::{BoundExprFn, ExprFn};
pub use generator::apply_generator;

use crate::error::{Error, Result};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::Measure;
use crate::util::rng::stream_rng;
use rand::Rng;
use serde::Serialize;

pub use crate::coeff::Witness;

/// Absolute part of the violation tolerance.
pub const ABS_TOL: f64 = 1e-8;
/// Relative part of the violation tolerance (scaled by the larger side).
pub const REL_TOL: f64 = 1e-6;
/// Negative values beyond this magnitude count as sign violations for
/// functions that must be nonnegative.
pub const NONNEG_TOL: f64 = 1e-12;
/// Default ceiling for `H/V` on the boundary shell of the working domain.
pub const DEFAULT_HV_EPS: f64 = 0.1;
/// Default multiplicative slack for the moment bound `∫V dμ ≤ C/Λ`.
pub const DEFAULT_MOMENT_SLACK: f64 = 0.01;
/// Half-width of the box the sampled measure family lives in.
pub const FAMILY_RADIUS: f64 = 3.0;
/// Largest atom count of a sampled cloud.
pub const MAX_CLOUD_ATOMS: usize = 16;
/// Default number of measures in the sampled family.
pub const DEFAULT_FAMILY_SIZE: usize = 100;
/// Cap on stored violation witnesses per report.
pub const MAX_WITNESSES: usize = 50;

/// Tolerance for one inequality comparison: violations are only reported
/// beyond `ABS_TOL` plus `REL_TOL` times the larger side's magnitude.
pub(crate) fn violation_tol(lhs: f64, rhs: f64) -> f64 {
    ABS_TOL + REL_TOL * lhs.abs().max(rhs.abs())
}

/// Gauges and constants of the drift conditions. `v` and `h` must be
/// measure-independent; `w` may depend on the measure through `MOM`/`INT`
/// functionals. `lambda` is strictly positive (it divides the moment
/// radius); the remaining constants are nonnegative.
#[derive(Clone, Debug)]
pub struct LyapunovSpec {
    pub v: ExprFn,
    pub w: ExprFn,
    pub h: ExprFn,
    pub c: f64,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LyapunovSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        v: ExprFn,
        w: ExprFn,
        h: ExprFn,
        c: f64,
        lambda: f64,
        c1: f64,
        c2: f64,
    ) -> Result<Self> {
        if v.dim() != w.dim() || v.dim() != h.dim() {
            return Err(Error::config(format!(
                "gauge dimensions disagree: V is {}, W is {}, H is {}",
                v.dim(),
                w.dim(),
                h.dim()
            )));
        }
        if v.depends_on_measure() {
            return Err(Error::config(format!(
                "V must not depend on the measure, got `{}`",
                v.describe()
            )));
        }
        if h.depends_on_measure() {
            return Err(Error::config(format!(
                "H must not depend on the measure, got `{}`",
                h.describe()
            )));
        }
        for (name, value) in [("C", c), ("C1", c1), ("C2", c2)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::config(format!(
                    "constant {name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::config(format!(
                "constant Lambda must be finite and strictly positive, got {lambda}"
            )));
        }
        Ok(LyapunovSpec {
            v,
            w,
            h,
            c,
            lambda,
            c1,
            c2,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }
}

/// Constants selected by the least-average-slack fit of the integrated
/// inequality over the sampled family; `radius = c / lambda` is the moment
/// bound they imply.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BestFit {
    pub c: f64,
    pub lambda: f64,
    pub radius: f64,
}

/// Outcome of one drift-condition check.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub pass: bool,
    /// Number of `(point, measure)` samples evaluated.
    pub checked: usize,
    /// Most binding margin `RHS − LHS` observed; negative beyond the
    /// tolerance means a violation (recorded in `violations`).
    pub worst_slack: f64,
    pub best_fit: Option<BestFit>,
    pub violations: Vec<Witness>,
    pub note: Option<String>,
}

/// The default measure family for integral checks: the origin and axis
/// extremes as single atoms, then seeded random clouds of at most
/// [`MAX_CLOUD_ATOMS`] atoms, all supported in `[-3, 3]^d`. The family
/// samples the compactly supported probability measures; the checks report
/// it as a sample.
pub fn default_check_family(dim: usize, count: usize, seed: u64) -> Result<Vec<Measure>> {
    if dim == 0 {
        return Err(Error::config("measure family dimension must be positive"));
    }
    if count == 0 {
        return Err(Error::config("measure family must not be empty"));
    }
    let mut out: Vec<Measure> = Vec::with_capacity(count);
    let mut singles: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    for i in 0..dim {
        for sgn in [-1.0, 1.0] {
            let mut x = vec![0.0; dim];
            x[i] = sgn * FAMILY_RADIUS;
            singles.push(x);
        }
    }
    for x in singles.into_iter().take(count) {
        out.push(Measure::Discrete(DiscreteMeasure::dirac(&x)?));
    }
    let mut rng = stream_rng(seed, 0x4C59_4146);
    while out.len() < count {
        let atoms = rng.random_range(1..=MAX_CLOUD_ATOMS);
        let mut pts = Vec::with_capacity(atoms * dim);
        for _ in 0..atoms * dim {
            pts.push(rng.random_range(-FAMILY_RADIUS..=FAMILY_RADIUS));
        }
        let mut wts: Vec<f64> = (0..atoms).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = wts.iter().sum();
        for w in wts.iter_mut() {
            *w /= total;
        }
        out.push(Measure::Discrete(DiscreteMeasure::probability(
            dim, pts, wts,
        )?));
    }
    Ok(out)
}

/// The constant grid swept when a check is asked to look for *any* working
/// pair instead of validating a given one.
pub fn default_constant_sweep() -> Vec<(f64, f64)> {
    let levels = [0.5, 1.0, 2.0, 4.0, 8.0];
    let mut out = Vec::with_capacity(levels.len() * levels.len());
    for &c in &levels {
        for &lambda in &levels {
            out.push((c, lambda));
        }
    }
    out
}

/// Measure-independent gauge candidates (polynomial growth ladders in
/// `|x|²`), used to probe whether a problem admits a solution-independent
/// gauge at all within the swept constants.
pub fn independent_candidate_battery(dim: usize) -> Result<Vec<ExprFn>> {
    if dim == 0 {
        return Err(Error::config("candidate battery dimension must be positive"));
    }
    let r2 = (1..=dim)
        .map(|i| format!("x{i}^2"))
        .collect::<Vec<_>>()
        .join(" + ");
    [
        format!("0.5*({r2})"),
        format!("{r2}"),
        format!("0.25*({r2})^2"),
        format!("1 + 0.5*({r2})"),
        format!("({r2}) + 0.25*({r2})^2"),
    ]
    .iter()
    .map(|t| ExprFn::parse(t, dim))
    .collect()
}
