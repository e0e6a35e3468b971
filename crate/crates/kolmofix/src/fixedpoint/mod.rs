//! Self-consistency loop: freeze the measure argument of the coefficients,
//! solve the linear stationary equation, mix the answer back with damping,
//! and repeat until the iterates stop moving. Also the localized variant
//! that solves a sequence of cutoff-truncated problems with compensated
//! measures and tracks the uniform moment bound across levels.

pub mod truncate;

pub use truncate::{
    build_truncated_operator, localized_solve, LocalizedLevel, LocalizedReport, TruncatedOperator,
};

use crate::coeff::field::CoefficientField;
use crate::error::{Error, Result};
use crate::frozen::{
    default_battery, solve_1d_closed, solve_ergodic, solve_grid_fv, weak_residual, FrozenProblem,
    SdeConfig,
};
use crate::lyapunov::{ConditionReport, Witness};
use crate::measure::ops::{in_pr, lyapunov_integral, measure_distance};
use crate::measure::{DiscreteMeasure, GridAxis, GridDensity, Measure, MeasureClassConfig};
use crate::util::cube::Cube;
use crate::util::rng::{derive_seed, stream_rng};
use rand::Rng;
use serde::Serialize;
use std::sync::Arc;

/// Default damping weight on the fresh inner solution.
pub const DEFAULT_THETA: f64 = 0.5;
/// Default stopping threshold for the composite measure distance.
pub const DEFAULT_TOL: f64 = 1e-3;
/// An iterate whose `V`-integral exceeds this multiple of the budget `R`
/// aborts the run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Relative slack allowed on the final measure's class membership.
pub const CLASS_SLACK: f64 = 0.05;
/// Default cap on accumulated atoms in mixed iterates.
pub const DEFAULT_COMPRESS_CAP: usize = 200_000;

/// Which linear solver handles each frozen problem.
#[derive(Clone, Debug)]
pub enum InnerBackend {
    /// One-dimensional quadrature of the stationary density (uniformly
    /// elliptic problems only).
    Closed { cells: usize },
    /// Conservative finite volumes on a tensor grid.
    Grid { cells: usize },
    /// Long-run trajectory averaging.
    Particle(SdeConfig),
}

/// Configuration of the damped self-consistency iteration.
#[derive(Clone)]
pub struct PicardConfig {
    /// Damping weight on the fresh solution, in `(0, 1]`.
    pub theta: f64,
    pub max_iter: usize,
    /// Stopping threshold on the composite measure distance.
    pub tol: f64,
    pub backend: InnerBackend,
    /// Moment class (gauge and budget `R`) the iterates must stay in.
    pub class: MeasureClassConfig,
    /// Working box for the inner solves.
    pub domain: Cube,
    pub seed: u64,
    /// Cap on accumulated atoms in mixed iterates; beyond it the mixture is
    /// thinned by weighted resampling.
    pub compress_cap: usize,
    /// Keep every iterate measure in the report (for per-step dumps).
    pub keep_trace: bool,
    /// Optional transformation applied to the iterate before it is frozen
    /// into the coefficients (used by localized solves to compensate
    /// truncated mass). The iterates themselves stay untransformed.
    pub freeze_map: Option<Arc<dyn Fn(&Measure) -> Result<Measure> + Send + Sync>>,
}

impl PicardConfig {
    pub fn new(
        theta: f64,
        max_iter: usize,
        tol: f64,
        backend: InnerBackend,
        class: MeasureClassConfig,
        domain: Cube,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::config(format!(
                "damping weight must lie in (0, 1], got {theta}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::config("need at least one iteration"));
        }
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::config(format!(
                "stopping threshold must be positive, got {tol}"
            )));
        }
        match &backend {
            InnerBackend::Closed { cells } | InnerBackend::Grid { cells } => {
                if *cells < 2 {
                    return Err(Error::config("grid backends need at least two cells"));
                }
            }
            InnerBackend::Particle(_) => {}
        }
        Ok(PicardConfig {
            theta,
            max_iter,
            tol,
            backend,
            class,
            domain,
            seed: 0,
            compress_cap: DEFAULT_COMPRESS_CAP,
            keep_trace: false,
            freeze_map: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace(mut self, keep: bool) -> Self {
        self.keep_trace = keep;
        self
    }

    pub fn with_compress_cap(mut self, cap: usize) -> Self {
        self.compress_cap = cap.max(1);
        self
    }

    pub fn with_freeze_map(
        mut self,
        map: Arc<dyn Fn(&Measure) -> Result<Measure> + Send + Sync>,
    ) -> Self {
        self.freeze_map = Some(map);
        self
    }
}

/// How the iteration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
}

/// Scalar diagnostics of one iterate: distance to the previous iterate,
/// `V`-integral, and the weak residual of the iterate against the operator
/// frozen at itself (self-consistency error).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterateStats {
    pub distance: f64,
    pub v_moment: f64,
    pub residual: f64,
}

/// Outcome of a damped self-consistency run.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterates: Vec<IterateStats>,
    pub final_measure: Measure,
    /// Condition reports attached by the caller (drift checks, moment
    /// bounds) plus the built-in class-membership check.
    pub assumptions: Vec<ConditionReport>,
    /// Number of linear solves performed (measure-independent coefficients
    /// require exactly one).
    pub inner_solves: usize,
    /// Damping weight at exit (halved after every distance increase).
    pub damping_final: f64,
    /// `∫V dμ ≤ R (1 + 5%)` for the final measure.
    pub final_in_class: bool,
    pub note: Option<String>,
    /// Every iterate measure, only when requested in the configuration.
    pub trace: Vec<Measure>,
}

/// One frozen linear solve with the configured backend.
pub(crate) fn inner_solve(
    field: &CoefficientField,
    sigma: &Measure,
    domain: &Cube,
    backend: &InnerBackend,
    seed: u64,
) -> Result<Measure> {
    let problem = FrozenProblem::new(field.clone(), sigma.clone(), domain.clone())?;
    match backend {
        InnerBackend::Closed { cells } => {
            if field.dim() != 1 {
                return Err(Error::UnsupportedDimension {
                    op: "closed-form stationary density",
                    dim: field.dim(),
                    detail: "the closed-form backend is one-dimensional".into(),
                });
            }
            let axis = GridAxis::new(domain.lo[0], domain.hi[0], *cells)?;
            Ok(Measure::Grid(solve_1d_closed(&problem, &axis)?))
        }
        InnerBackend::Grid { cells } => {
            let axes = (0..field.dim())
                .map(|i| GridAxis::new(domain.lo[i], domain.hi[i], *cells))
                .collect::<Result<Vec<_>>>()?;
            Ok(Measure::Grid(solve_grid_fv(&problem, &axes)?))
        }
        InnerBackend::Particle(sde) => Ok(Measure::Discrete(solve_ergodic(
            &problem,
            &sde.clone().with_seed(seed),
        )?)),
    }
}

/// `(1-θ)·prev ⊕ θ·fresh`. Grid iterates on identical axes mix exactly,
/// cell by cell; anything else mixes as atom clouds, thinned to `cap`.
pub(crate) fn damped_mix(
    prev: &Measure,
    fresh: &Measure,
    theta: f64,
    cap: usize,
    rng: &mut impl Rng,
) -> Result<Measure> {
    if theta >= 1.0 {
        return Ok(fresh.clone());
    }
    if let (Measure::Grid(g0), Measure::Grid(g1)) = (prev, fresh) {
        if g0.axes() == g1.axes() {
            let values: Vec<f64> = g0
                .values()
                .iter()
                .zip(g1.values())
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect();
            let g = GridDensity::new(
                g0.axes().to_vec(),
                values,
                g0.is_probability() && g1.is_probability(),
            )?;
            return Ok(Measure::Grid(g));
        }
    }
    let a = prev.to_atoms()?;
    let b = fresh.to_atoms()?;
    let mixed = DiscreteMeasure::mix(&[(1.0 - theta, &a), (theta, &b)])?;
    Ok(Measure::Discrete(if mixed.n_atoms() > cap {
        mixed.compressed(cap, rng)?
    } else {
        mixed
    }))
}

/// Damped self-consistency iteration from `mu0`: each step solves the
/// linear problem with the coefficients frozen at the current iterate and
/// mixes the solution back with weight `θ`. Stops when the composite
/// distance between consecutive iterates drops to `tol`, the `V`-integral
/// exceeds ten times the budget (diverged), or `max_iter` is hit.
///
/// When the coefficients do not depend on the measure the map is constant:
/// one inner solve is performed and its output is taken directly (damping
/// would only slow the approach to the same answer).
pub fn picard_solve(
    field: &CoefficientField,
    mu0: &Measure,
    cfg: &PicardConfig,
) -> Result<SolveReport> {
    let d = field.dim();
    if mu0.dim() != d {
        return Err(Error::config(format!(
            "initial measure has dimension {}, the field has {d}",
            mu0.dim()
        )));
    }
    if cfg.domain.dim() != d {
        return Err(Error::config(format!(
            "working box has dimension {}, the field has {d}",
            cfg.domain.dim()
        )));
    }
    if !in_pr(mu0, &cfg.class)? {
        return Err(Error::config(format!(
            "initial measure lies outside the moment class: integral V = {:.6e}, budget R = {:.6e}",
            lyapunov_integral(mu0, cfg.class.v.as_ref())?,
            cfg.class.r
        )));
    }
    let battery = default_battery(d, &cfg.domain);
    // A deterministic backend plus measure-free coefficients makes the map
    // constant; trajectory averaging still varies with the start points.
    let constant_phi =
        !field.depends_on_measure() && !matches!(cfg.backend, InnerBackend::Particle(_));

    let mut sigma = mu0.clone();
    let mut theta = cfg.theta;
    let mut iterates: Vec<IterateStats> = Vec::new();
    let mut trace: Vec<Measure> = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut inner_solves = 0usize;
    let mut cached: Option<Measure> = None;
    let mut prev_distance = f64::INFINITY;

    for k in 0..cfg.max_iter {
        let fresh = match &cached {
            Some(phi) if constant_phi => phi.clone(),
            _ => {
                let frozen = match &cfg.freeze_map {
                    Some(map) => map(&sigma).map_err(|e| Error::InnerSolve {
                        iteration: k + 1,
                        source: Box::new(e),
                    })?,
                    None => sigma.clone(),
                };
                inner_solves += 1;
                let phi = inner_solve(
                    field,
                    &frozen,
                    &cfg.domain,
                    &cfg.backend,
                    derive_seed(cfg.seed, k as u64 + 1),
                )
                .map_err(|e| Error::InnerSolve {
                    iteration: k + 1,
                    source: Box::new(e),
                })?;
                cached = Some(phi.clone());
                phi
            }
        };
        let next = if constant_phi {
            fresh
        } else {
            let mut rng = stream_rng(cfg.seed, 0x5049_4341u64.wrapping_add(k as u64));
            damped_mix(&sigma, &fresh, theta, cfg.compress_cap, &mut rng)?
        };
        let distance = measure_distance(&next, &sigma, cfg.class.v.as_ref())?;
        let v_moment = lyapunov_integral(&next, cfg.class.v.as_ref())?;
        let residual = {
            let frozen = match &cfg.freeze_map {
                Some(map) => map(&next)?,
                None => next.clone(),
            };
            weak_residual(&next, field, &frozen, &battery)?
        };
        iterates.push(IterateStats {
            distance,
            v_moment,
            residual,
        });
        if cfg.keep_trace {
            trace.push(next.clone());
        }
        sigma = next;
        if v_moment > DIVERGENCE_FACTOR * cfg.class.r {
            status = SolveStatus::Diverged;
            break;
        }
        if distance <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if distance > prev_distance {
            theta *= 0.5;
        }
        prev_distance = distance;
    }

    let final_v = lyapunov_integral(&sigma, cfg.class.v.as_ref())?;
    let allowed = cfg.class.r * (1.0 + CLASS_SLACK);
    let final_in_class = final_v <= allowed;
    let assumptions = vec![ConditionReport {
        name: "measure class membership".into(),
        pass: final_in_class,
        checked: 1,
        worst_slack: allowed - final_v,
        best_fit: None,
        violations: if final_in_class {
            vec![]
        } else {
            vec![Witness {
                x: vec![],
                measure_index: 0,
                detail: format!(
                    "final integral V = {final_v:.6e} exceeds the budget R(1+{CLASS_SLACK}) = {allowed:.6e}"
                ),
            }]
        },
        note: Some(format!(
            "integral V = {final_v:.6e} against R(1+{CLASS_SLACK}) = {allowed:.6e}"
        )),
    }];

    let note = if status == SolveStatus::MaxIter && iterates.len() >= 10 {
        let tail = &iterates[iterates.len() - 5..];
        let before = &iterates[iterates.len() - 10..iterates.len() - 5];
        let tail_min = tail.iter().map(|s| s.distance).fold(f64::INFINITY, f64::min);
        let before_min = before
            .iter()
            .map(|s| s.distance)
            .fold(f64::INFINITY, f64::min);
        if tail_min >= 0.999 * before_min {
            Some(
                "the distance between iterates stopped contracting; the trajectory may be \
                 cycling between accumulation points — inspect the iterate log rather than \
                 trusting the last measure alone"
                    .to_string(),
            )
        } else {
            None
        }
    } else {
        None
    };

    Ok(SolveReport {
        status,
        iterates,
        final_measure: sigma,
        assumptions,
        inner_solves,
        damping_final: theta,
        final_in_class,
        note,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::parse::parse_coeff;
    use crate::func::HalfSquare;
    use crate::measure::ops::moment;
    use crate::measure::MomentKind;

    fn entry(text: &str) -> crate::coeff::field::CoeffEntry {
        parse_coeff(text).unwrap().into()
    }

    fn half_square_class(r: f64) -> MeasureClassConfig {
        MeasureClassConfig::new(Arc::new(HalfSquare::new(1)), r).unwrap()
    }

    fn dirac(z: f64) -> Measure {
        Measure::Discrete(DiscreteMeasure::dirac(&[z]).unwrap())
    }

    fn two_atoms(z: f64) -> Measure {
        Measure::Discrete(
            DiscreteMeasure::probability(1, vec![-z, z], vec![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn config_invariants_are_enforced() {
        let class = half_square_class(4.0);
        let domain = Cube::symmetric(8.0, 1).unwrap();
        let mk = |theta: f64, tol: f64| {
            PicardConfig::new(
                theta,
                50,
                tol,
                InnerBackend::Closed { cells: 200 },
                class.clone(),
                domain.clone(),
            )
        };
        assert!(mk(0.5, 1e-3).is_ok());
        assert!(mk(0.0, 1e-3).is_err());
        assert!(mk(1.5, 1e-3).is_err());
        assert!(mk(0.5, 0.0).is_err());
    }

    #[test]
    fn measure_free_coefficients_need_one_inner_solve() {
        let field = CoefficientField::scalar(entry("1"), entry("-x1"), 1).unwrap();
        let cfg = PicardConfig::new(
            0.5,
            50,
            1e-3,
            InnerBackend::Closed { cells: 400 },
            half_square_class(4.0),
            Cube::symmetric(8.0, 1).unwrap(),
        )
        .unwrap();
        let report = picard_solve(&field, &dirac(2.0), &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.inner_solves, 1);
        assert_eq!(report.iterates.len(), 2);
        assert!(report.iterates[1].distance <= cfg.tol);
        assert!(report.final_in_class);
        let m2 = moment(&report.final_measure, 2.0, MomentKind::Component(0)).unwrap();
        assert!((m2 - 1.0).abs() < 1e-3, "second moment {m2}");
        assert!(report.assumptions[0].pass);
    }

    #[test]
    fn interaction_coefficients_contract_toward_the_origin() {
        // a = x²J³, b = -2x³J with J = ∫|y|dμ: each frozen solve piles mass
        // around the diffusion-free point 0, so J shrinks toward 0.
        let field = CoefficientField::scalar(
            entry("x1^2 * MOM(1,abs)^3"),
            entry("-2 * x1^3 * MOM(1,abs)"),
            1,
        )
        .unwrap();
        let cfg = PicardConfig::new(
            0.5,
            60,
            1e-3,
            InnerBackend::Grid { cells: 256 },
            half_square_class(1.5),
            Cube::symmetric(3.0, 1).unwrap(),
        )
        .unwrap();
        let report = picard_solve(&field, &two_atoms(1.0), &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged, "{:?}", report.note);
        let j = moment(&report.final_measure, 1.0, MomentKind::Abs).unwrap();
        assert!(j <= 0.05, "final first absolute moment {j}");
        assert!(report.final_in_class);
        assert!(report.iterates.iter().all(|s| s.distance >= 0.0));
        let last = report.iterates.last().unwrap();
        assert!(last.distance <= cfg.tol);
    }

    #[test]
    fn bounded_diffusion_with_mean_reversion_finds_the_symmetric_density() {
        // a = max(0, 1-|x|), b = 2∫y dμ - x. From a symmetric start the mean
        // stays 0 and the iterates approach the density ∝ e^{|x|} on [-1, 1]
        // whose second moment is (e-2)/(e-1).
        let field = CoefficientField::scalar(
            entry("MAX(0, 1 - ABS(x1))"),
            entry("INT(2*y1) - x1"),
            1,
        )
        .unwrap();
        let cfg = PicardConfig::new(
            0.5,
            60,
            1e-3,
            InnerBackend::Grid { cells: 400 },
            half_square_class(1.0),
            Cube::symmetric(2.0, 1).unwrap(),
        )
        .unwrap();
        let report = picard_solve(&field, &two_atoms(0.5), &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let mean = moment(&report.final_measure, 1.0, MomentKind::Component(0)).unwrap();
        assert!(mean.abs() <= 0.02, "mean {mean}");
        let m2 = moment(&report.final_measure, 2.0, MomentKind::Component(0)).unwrap();
        let expect = (std::f64::consts::E - 2.0) / (std::f64::consts::E - 1.0);
        assert!((m2 - expect).abs() < 0.05, "second moment {m2} vs {expect}");
        // Self-consistency residuals shrink as the iterates settle.
        let first = report.iterates.first().unwrap().residual;
        let last = report.iterates.last().unwrap().residual;
        assert!(last <= first, "residual went {first} -> {last}");
    }

    #[test]
    fn expanding_mean_feedback_is_flagged_as_divergence() {
        // b = 3∫y dμ - x: the frozen solve triples the mean, so the damped
        // trajectory still escapes and must be stopped by the 10R guard.
        let field =
            CoefficientField::scalar(entry("1"), entry("3*INT(y1) - x1"), 1).unwrap();
        let cfg = PicardConfig::new(
            0.5,
            50,
            1e-3,
            InnerBackend::Closed { cells: 300 },
            half_square_class(4.0),
            Cube::symmetric(40.0, 1).unwrap(),
        )
        .unwrap();
        let report = picard_solve(&field, &dirac(2.0), &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Diverged);
        assert!(report.iterates.last().unwrap().v_moment > 40.0);
        assert!(!report.final_in_class);
        assert!(!report.assumptions[0].pass);
    }

    #[test]
    fn inner_failures_carry_the_iteration_index() {
        // A diffusion that vanishes identically cannot be handled by the
        // closed-form backend.
        let field = CoefficientField::scalar(entry("0"), entry("-x1"), 0).unwrap();
        let cfg = PicardConfig::new(
            0.5,
            10,
            1e-3,
            InnerBackend::Closed { cells: 100 },
            half_square_class(4.0),
            Cube::symmetric(4.0, 1).unwrap(),
        )
        .unwrap();
        let err = picard_solve(&field, &dirac(1.0), &cfg).unwrap_err();
        match err {
            Error::InnerSolve { iteration, .. } => assert_eq!(iteration, 1),
            other => panic!("expected an inner-solve failure, got {other}"),
        }
    }

    #[test]
    fn start_outside_the_moment_class_is_rejected() {
        let field = CoefficientField::scalar(entry("1"), entry("-x1"), 1).unwrap();
        let cfg = PicardConfig::new(
            0.5,
            10,
            1e-3,
            InnerBackend::Closed { cells: 100 },
            half_square_class(1.0),
            Cube::symmetric(8.0, 1).unwrap(),
        )
        .unwrap();
        let err = picard_solve(&field, &dirac(3.0), &cfg).unwrap_err();
        assert!(err.to_string().contains("moment class"), "{err}");
    }

    #[test]
    fn damped_mixture_preserves_mass_and_mixes_grids_exactly() {
        let mut rng = stream_rng(7, 1);
        let atoms = two_atoms(1.0);
        let axis = GridAxis::new(-2.0, 2.0, 50).unwrap();
        let h = axis.step();
        let grid = Measure::Grid(
            GridDensity::new(vec![axis], vec![1.0 / (50.0 * h); 50], true).unwrap(),
        );
        let mixed = damped_mix(&atoms, &grid, 0.3, 100_000, &mut rng).unwrap();
        assert!((mixed.mass() - 1.0).abs() < 1e-12);
        // Same-axes grids stay grids and mix cell by cell.
        let g2 = damped_mix(&grid, &grid, 0.25, 100_000, &mut rng).unwrap();
        match &g2 {
            Measure::Grid(g) => assert_eq!(g.n_cells(), 50),
            other => panic!("expected a grid iterate, got {other:?}"),
        }
        assert!((g2.mass() - 1.0).abs() < 1e-12);
        // theta = 1 returns the fresh measure untouched.
        let full = damped_mix(&atoms, &grid, 1.0, 100_000, &mut rng).unwrap();
        assert!(matches!(full, Measure::Grid(_)));
    }

    #[test]
    fn mixtures_beyond_the_cap_are_thinned() {
        let mut rng = stream_rng(11, 2);
        let n = 600;
        let pts: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let w = vec![1.0 / n as f64; n];
        let big = Measure::Discrete(DiscreteMeasure::probability(1, pts, w).unwrap());
        let mixed = damped_mix(&big, &two_atoms(0.5), 0.5, 256, &mut rng).unwrap();
        assert!(mixed.support_size() <= 256);
        assert!((mixed.mass() - 1.0).abs() < 1e-9);
    }
}
