//! Empirical health checks on solver outputs and coefficient structure:
//! integrability of block projections estimated through kernel-density
//! norms, stability of measure-dependent coefficients along weakly
//! convergent measure sequences, and the smoothing error of y-block
//! mollification.

pub mod convergence;

pub use convergence::{
    coefficient_convergence, mollification_convergence, ConvergenceReport, MollifierConfig,
    MollifierReport,
};

use crate::error::{Error, Result};
use crate::measure::kde::kde_lr_norm;
use crate::measure::ops::project_y;
use crate::measure::{Measure, ProjectionWindow};
use serde::Serialize;

/// Default exponent bump for the single-coordinate split (`m = 1`), where
/// the derived integrability exponent is `1 + gamma`.
pub const DEFAULT_GAMMA: f64 = 1.0;

/// A kernel-density norm growing at least this fast as the bandwidth
/// shrinks (slope of log-norm against log-1/bandwidth) is treated as
/// evidence of a singular projection.
pub const DIVERGENCE_EXPONENT: f64 = 0.4;

/// One point of a parameter-indexed trend (bandwidths, sample sizes,
/// smoothing radii, ...).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrendPoint {
    pub param: f64,
    pub value: f64,
}

/// Settings for the projected-density integrability estimate.
#[derive(Clone)]
pub struct RegularityConfig {
    /// Leading-block projection: split index, trailing weight, norm cube,
    /// norm exponent, and class budget.
    pub window: ProjectionWindow,
    /// Exponent bump used when the leading block is one-dimensional.
    pub gamma: f64,
    /// Coarsest kernel bandwidth; the estimate is run at `{h, h/2, h/4}`.
    pub bandwidth: f64,
}

impl RegularityConfig {
    pub fn new(window: ProjectionWindow, gamma: f64, bandwidth: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::config("exponent bump gamma must be positive"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::config("kernel bandwidth must be positive"));
        }
        Ok(RegularityConfig {
            window,
            gamma,
            bandwidth,
        })
    }

    /// The integrability exponent implied by the split: `1 + gamma` for a
    /// one-dimensional leading block, the block dimension otherwise.
    pub fn r_prime(&self) -> f64 {
        if self.window.m == 1 {
            1.0 + self.gamma
        } else {
            self.window.m as f64
        }
    }
}

/// Outcome of the projected-density integrability estimate.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// `(bandwidth, L^r norm)` at the shrinking schedule.
    pub norms: Vec<TrendPoint>,
    /// Small-bandwidth limit of the norm when the trend is contracting;
    /// otherwise the finest-bandwidth value.
    pub extrapolated_norm: f64,
    /// Slope of log-norm against log-1/bandwidth over the schedule.
    pub growth_exponent: f64,
    /// Norms grow fast enough to indicate a singular projected measure.
    pub diverging: bool,
    /// Not diverging and the extrapolated norm is within the budget.
    pub in_class: bool,
    /// Norm exponent used by the estimate.
    pub r: f64,
    /// Exponent implied by the block split (reported, not estimated).
    pub r_prime: f64,
    /// Norm budget defining class membership.
    pub budget: f64,
    /// Mass the projection keeps (trailing weight included).
    pub projected_mass: f64,
    pub note: String,
}

/// Geometric tail extrapolation of `n1, n2, n3` (values at a bandwidth and
/// its two halvings). Returns the extrapolated limit and whether the trend
/// was contracting enough to trust; when it is not, the finest value `n3`
/// is returned unchanged.
fn extrapolate_tail(n1: f64, n2: f64, n3: f64) -> (f64, bool) {
    let d1 = n2 - n1;
    let d2 = n3 - n2;
    let denom = d1 - d2;
    if d1 * d2 > 0.0 && d2.abs() < d1.abs() && denom.abs() > 0.0 {
        let limit = n3 + d2 * d2 / denom;
        // An extrapolated tail far beyond the observed total change means
        // the geometric model does not fit; keep the finest value instead.
        if (limit - n3).abs() <= 2.0 * (n3 - n1).abs() {
            return (limit, true);
        }
    }
    (n3, false)
}

/// Least-squares slope of `ln(value)` against `ln(param)` over the points
/// with positive coordinates; `None` when fewer than two remain or the
/// parameters do not vary.
pub(crate) fn log_log_slope(points: &[TrendPoint]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.param > 0.0 && p.value > 0.0)
        .map(|p| (p.param.ln(), p.value.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx) * (l.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Estimate the integrability of the leading-block projection of `mu`:
/// kernel-density `L^r` norms over the window cube at bandwidths
/// `{h, h/2, h/4}`, an extrapolated limit, and a growth flag. A norm that
/// keeps growing as the bandwidth shrinks indicates the projection has no
/// integrable density at this exponent, whatever the budget. The estimate
/// only looks at the measure, so it applies unchanged to solutions of
/// problems with extra zero-order terms.
pub fn projection_regularity(mu: &Measure, cfg: &RegularityConfig) -> Result<RegularityReport> {
    let proj = project_y(mu, &cfg.window)?;
    let h = cfg.bandwidth;
    let schedule = [h, 0.5 * h, 0.25 * h];
    let mut norms = Vec::with_capacity(3);
    for hk in schedule {
        let value = kde_lr_norm(&proj, &cfg.window.k_y, cfg.window.r, hk)?;
        norms.push(TrendPoint { param: hk, value });
    }
    let (n1, n2, n3) = (norms[0].value, norms[1].value, norms[2].value);
    let growth_exponent = if n1 > 0.0 && n3 > 0.0 {
        (n3 / n1).ln() / 4.0f64.ln()
    } else {
        0.0
    };
    let diverging = growth_exponent >= DIVERGENCE_EXPONENT;
    let (extrapolated_norm, tail_used) = extrapolate_tail(n1, n2, n3);
    let in_class = !diverging && extrapolated_norm <= cfg.window.s;
    let note = format!(
        "kernel-density norms at bandwidths {:.4e}/{:.4e}/{:.4e}; tail {}; \
         growth slope {:.3} against the divergence threshold {}",
        schedule[0],
        schedule[1],
        schedule[2],
        if tail_used {
            "extrapolated from the contraction of the schedule"
        } else {
            "taken at the finest bandwidth (trend not contracting)"
        },
        growth_exponent,
        DIVERGENCE_EXPONENT,
    );
    Ok(RegularityReport {
        norms,
        extrapolated_norm,
        growth_exponent,
        diverging,
        in_class,
        r: cfg.window.r,
        r_prime: cfg.r_prime(),
        budget: cfg.window.s,
        projected_mass: proj.mass(),
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::ClosureFn;
    use crate::measure::discrete::DiscreteMeasure;
    use crate::measure::families::gaussian_sample;
    use crate::util::cube::Cube;
    use std::sync::Arc;

    fn window(r: f64, s: f64) -> ProjectionWindow {
        ProjectionWindow {
            m: 1,
            eta: Arc::new(ClosureFn::new(1, |_| 1.0)),
            k_y: Cube::symmetric(1.0, 1).unwrap(),
            q_y: Cube::symmetric(2.5, 1).unwrap(),
            r,
            s,
        }
    }

    #[test]
    fn projected_gaussian_norm_matches_quadrature() {
        // Leading-block projection of a 2-D standard normal sample is a
        // 1-D standard normal sample; its density norm over [-1, 1] is
        // known in closed form: sqrt(erf(1) / (2 sqrt(pi))).
        let mu = Measure::Discrete(gaussian_sample(2, 20_000, 71).unwrap());
        let cfg = RegularityConfig::new(window(2.0, 10.0), DEFAULT_GAMMA, 0.2).unwrap();
        let report = projection_regularity(&mu, &cfg).unwrap();
        let oracle = 0.48756692331907814;
        assert!(
            (report.extrapolated_norm - oracle).abs() <= 0.05 * oracle,
            "norm {} vs {oracle}",
            report.extrapolated_norm
        );
        assert!(!report.diverging, "slope {}", report.growth_exponent);
        assert!(report.in_class);
        assert_eq!(report.r_prime, 2.0);
        assert!((report.projected_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trailing_blocks_with_unit_weight_do_not_change_the_norm() {
        let base = gaussian_sample(1, 400, 9).unwrap();
        let mut pts = Vec::with_capacity(2 * base.n_atoms());
        for k in 0..base.n_atoms() {
            pts.push(base.point(k)[0]);
            pts.push(3.0);
        }
        let product = DiscreteMeasure::probability(2, pts, base.weights().to_vec()).unwrap();
        let mut win = window(2.0, 10.0);
        // A trailing weight that is 1 exactly where the product's trailing
        // coordinate sits: projection keeps every atom at full weight.
        win.eta = Arc::new(ClosureFn::new(1, |z| {
            if (z[0] - 3.0).abs() < 0.5 {
                1.0
            } else {
                0.0
            }
        }));
        let cfg = RegularityConfig::new(win, DEFAULT_GAMMA, 0.2).unwrap();
        let report = projection_regularity(&Measure::Discrete(product), &cfg).unwrap();
        for point in &report.norms {
            let direct =
                kde_lr_norm(&base, &Cube::symmetric(1.0, 1).unwrap(), 2.0, point.param).unwrap();
            assert_eq!(point.value, direct, "bandwidth {}", point.param);
        }
    }

    #[test]
    fn an_atom_is_flagged_as_diverging() {
        let mu = Measure::Discrete(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
        let cfg = RegularityConfig::new(window(2.0, 10.0), DEFAULT_GAMMA, 0.2).unwrap();
        let report = projection_regularity(&mu, &cfg).unwrap();
        // Kernel estimate of a point mass at bandwidth h has L^2 norm
        // sqrt(erf(1/h) / (2 sqrt(pi) h)): halving h grows it by sqrt(2).
        let analytic = [1.1876337646207362, 1.6795677770601523, 2.375267529243298];
        for (point, want) in report.norms.iter().zip(analytic) {
            assert!(
                (point.value - want).abs() <= 0.01 * want,
                "bandwidth {}: {} vs {want}",
                point.param,
                point.value
            );
        }
        assert!(
            (report.growth_exponent - 0.5).abs() < 0.05,
            "slope {}",
            report.growth_exponent
        );
        assert!(report.diverging);
        assert!(!report.in_class, "a singular projection is never in class");
    }

    #[test]
    fn empty_projections_are_rejected() {
        let mu = Measure::Discrete(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
        let mut win = window(2.0, 10.0);
        win.eta = Arc::new(ClosureFn::new(1, |_| 0.0));
        let cfg = RegularityConfig::new(win, DEFAULT_GAMMA, 0.2).unwrap();
        let err = projection_regularity(&mu, &cfg).unwrap_err();
        assert!(
            err.to_string().contains("mass"),
            "a window that zeroes every atom must fail with a mass error, got: {err}"
        );
    }

    #[test]
    fn config_invariants_are_enforced() {
        assert!(RegularityConfig::new(window(2.0, 10.0), 0.0, 0.2).is_err());
        assert!(RegularityConfig::new(window(2.0, 10.0), -1.0, 0.2).is_err());
        assert!(RegularityConfig::new(window(2.0, 10.0), 1.0, 0.0).is_err());
        assert!(RegularityConfig::new(window(2.0, 10.0), 1.0, f64::NAN).is_err());
        let cfg = RegularityConfig::new(window(2.0, 10.0), 0.5, 0.1).unwrap();
        assert_eq!(cfg.r_prime(), 1.5);
        let mut wide = window(2.0, 10.0);
        wide.m = 2;
        // Exponent table: a leading block of dimension m >= 2 uses m itself.
        let cfg2 = RegularityConfig::new(wide, 0.5, 0.1).unwrap();
        assert_eq!(cfg2.r_prime(), 2.0);
    }

    #[test]
    fn tail_extrapolation_is_gated_on_contraction() {
        // Geometric contraction: limit recovered exactly.
        let (limit, used) = extrapolate_tail(1.5, 1.25, 1.125);
        assert!(used);
        assert!((limit - 1.0).abs() < 1e-12);
        // Growing differences: no extrapolation, finest value kept.
        let (limit, used) = extrapolate_tail(1.0, 1.5, 2.5);
        assert!(!used);
        assert_eq!(limit, 2.5);
        // Sign flip (noise-dominated): finest value kept.
        let (limit, used) = extrapolate_tail(1.0, 1.2, 1.1);
        assert!(!used);
        assert_eq!(limit, 1.1);
    }
}
