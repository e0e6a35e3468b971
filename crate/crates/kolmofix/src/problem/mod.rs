//! Problem files: a small `key = value` text format that describes one
//! stationary mean-field problem — coefficient expressions, gauges and
//! drift constants, working box, inner-solver parameters, outer-iteration
//! parameters, the starting measure, and optional projection/mollification
//! windows — plus the catalog of shipped presets.
//!
//! The grammar is documented in `docs/problem-format.md`. Every semantic
//! error points at the offending line, and unknown keys are rejected so a
//! misspelled parameter can never silently fall back to its default.

pub mod parse;
pub mod presets;

use crate::coeff::field::{CoeffEntry, CoefficientField};
use crate::coeff::parse::parse_coeff;
use crate::error::{Error, Result};
use crate::fixedpoint::{InnerBackend, PicardConfig, DEFAULT_THETA, DEFAULT_TOL};
use crate::frozen::SdeConfig;
use crate::func::ClosureFn;
use crate::lyapunov::{ExprFn, LyapunovSpec, DEFAULT_FAMILY_SIZE, DEFAULT_HV_EPS};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::families::gaussian_sample;
use crate::measure::{Measure, MeasureClassConfig, ProjectionWindow};
use crate::util::bump::radial_cutoff;
use crate::util::cube::Cube;
use crate::util::rng::derive_seed;
use parse::RawConfig;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

/// Cells per axis for the grid/closed backends when the file says nothing.
pub const DEFAULT_CELLS: usize = 400;
/// Default time step of the trajectory backend.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default horizon of the trajectory backend.
pub const DEFAULT_T: f64 = 100.0;
/// Default particle count of the trajectory backend.
pub const DEFAULT_PARTICLES: usize = 10_000;
/// Default guard radius; trajectories beyond it abort the solve.
pub const DEFAULT_BLOW_UP: f64 = 1e8;
/// Default cap on recorded trajectory atoms.
pub const DEFAULT_MAX_ATOMS: usize = 2_000_000;
/// Default outer-iteration budget.
pub const DEFAULT_MAX_ITER: usize = 50;
/// Default smoothing-scale schedule for mollification studies.
pub const DEFAULT_MOLLIFY_DELTAS: [f64; 3] = [0.5, 0.25, 0.125];
/// Default pass tolerance on the final mollification gap.
pub const DEFAULT_MOLLIFY_TOL: f64 = 0.05;
/// Default midpoints per axis for the sampling checkers.
pub const DEFAULT_VERIFY_RESOLUTION: usize = 33;
/// Default pair budget of the degenerate-direction continuity checker.
pub const DEFAULT_PAIR_BUDGET: usize = 200;
/// Default integrability exponent of the projection window (the theory
/// allows any exponent above one when a single coordinate is kept).
pub const DEFAULT_WINDOW_R: f64 = 2.0;
/// Default norm budget of the projection window.
pub const DEFAULT_WINDOW_S: f64 = 10.0;
/// Stream tag that derives the sampling seed of generated starts.
const INIT_STREAM: u64 = 0x494E_4954;

/// Which inner linear solver the file selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Closed,
    Grid,
    Particle,
}

impl BackendKind {
    pub fn parse_name(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(BackendKind::Closed),
            "grid" => Ok(BackendKind::Grid),
            "particle" => Ok(BackendKind::Particle),
            other => Err(Error::config(format!(
                "unknown backend `{other}`; expected `closed`, `grid`, or `particle`"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Closed => "closed",
            BackendKind::Grid => "grid",
            BackendKind::Particle => "particle",
        }
    }
}

/// Numerical parameters of the inner solver. Grid and trajectory settings
/// both live here so the backend can be switched without editing the file.
#[derive(Clone, Debug, Serialize)]
pub struct SolverSpec {
    pub backend: BackendKind,
    pub cells: usize,
    pub dt: f64,
    pub t_horizon: f64,
    pub burn_in: f64,
    pub particles: usize,
    pub blow_up: f64,
    pub max_atoms: usize,
}

impl SolverSpec {
    /// The backend handle consumed by the outer iteration.
    pub fn inner_backend(&self, seed: u64) -> Result<InnerBackend> {
        Ok(match self.backend {
            BackendKind::Closed => InnerBackend::Closed { cells: self.cells },
            BackendKind::Grid => InnerBackend::Grid { cells: self.cells },
            BackendKind::Particle => InnerBackend::Particle(
                SdeConfig::new(self.dt, self.t_horizon, self.burn_in, self.particles, seed)?
                    .with_blow_up_radius(self.blow_up)
                    .with_max_atoms(self.max_atoms),
            ),
        })
    }
}

/// How the starting measure of the outer iteration is built.
#[derive(Clone, Debug)]
pub enum InitSpec {
    /// A single atom.
    Dirac(Vec<f64>),
    /// An explicit atom cloud; weights must sum to one.
    Atoms { points: Vec<f64>, weights: Vec<f64> },
    /// A standard normal sample of the given size, seeded from the
    /// problem seed.
    GaussianSample { n: usize },
}

/// One fully assembled problem: everything the solver, the checkers, and
/// the diagnostics need, validated at load time.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    /// One-line human description (the `describe` key).
    pub describe: String,
    pub field: CoefficientField,
    pub lyap: LyapunovSpec,
    /// Moment budget `R` of the admissible class (default `C / Λ`).
    pub budget: f64,
    pub domain: Cube,
    pub solver: SolverSpec,
    pub theta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub compress_cap: Option<usize>,
    pub seed: u64,
    pub init: InitSpec,
    pub window: Option<ProjectionWindow>,
    pub mollify_deltas: Vec<f64>,
    pub mollify_tol: f64,
    pub verify_resolution: usize,
    pub family_size: usize,
    pub hv_eps: f64,
    pub pair_budget: usize,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.field.dim())
            .field("m", &self.field.split_m())
            .field("backend", &self.solver.backend)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// Re-anchor an expression error at the configuration file position.
fn expr_err(e: Error, key: &str, line: usize, val_col: usize) -> Error {
    match e {
        Error::Parse {
            col, message, ..
        } => Error::Parse {
            line,
            // The expression starts one character after the opening quote.
            col: val_col + col,
            message: format!("in `{key}`: {message}"),
        },
        other => Error::Parse {
            line,
            col: val_col,
            message: format!("in `{key}`: {other}"),
        },
    }
}

fn parse_entry(text: &str, key: &str, line: usize, val_col: usize) -> Result<CoeffEntry> {
    parse_coeff(text)
        .map(CoeffEntry::from)
        .map_err(|e| expr_err(e, key, line, val_col))
}

fn parse_gauge(text: &str, dim: usize, key: &str, line: usize, val_col: usize) -> Result<ExprFn> {
    ExprFn::parse(text, dim).map_err(|e| expr_err(e, key, line, val_col))
}

/// Interpret the `KOLMOFIX_SEED` environment value, when present.
pub(crate) fn env_seed_override(raw: Option<&str>) -> Result<Option<u64>> {
    match raw {
        None => Ok(None),
        Some(s) => s.trim().parse::<u64>().map(Some).map_err(|_| {
            Error::config(format!(
                "KOLMOFIX_SEED must be a nonnegative integer, got `{s}`"
            ))
        }),
    }
}

fn zero_entry() -> CoeffEntry {
    CoeffEntry::from(crate::coeff::ast::CoeffExpr::Const(0.0))
}

impl Problem {
    /// Parse and validate a problem file. `fallback_name` names the
    /// problem when the file has no `name` key (callers pass the file
    /// stem).
    pub fn from_text(text: &str, fallback_name: &str) -> Result<Problem> {
        let mut raw = RawConfig::parse(text)?;

        let dim = raw.require_usize("dim")?;
        if dim == 0 {
            return Err(Error::config("`dim` must be at least 1"));
        }
        let m = raw.require_usize("m")?;
        let name = raw
            .take_str("name")?
            .map(|(s, _, _)| s)
            .unwrap_or_else(|| fallback_name.to_string());
        let describe = raw
            .take_str("describe")?
            .map(|(s, _, _)| s)
            .unwrap_or_default();

        // Coefficients: absent entries are zero, one-sided off-diagonal
        // diffusion entries are mirrored.
        let mut a: Vec<Option<CoeffEntry>> = vec![None; dim * dim];
        for item in raw.take_indexed("a")? {
            if item.indices.len() != 2 {
                return Err(Error::Parse {
                    line: item.line,
                    col: 1,
                    message: format!(
                        "diffusion entries use two indices `a[i][j]`, got `{}`",
                        item.key
                    ),
                });
            }
            let (i, j) = (item.indices[0], item.indices[1]);
            if i == 0 || j == 0 || i > dim || j > dim {
                return Err(Error::Parse {
                    line: item.line,
                    col: 1,
                    message: format!(
                        "indices in `{}` must lie in 1..={dim} (they are 1-based)",
                        item.key
                    ),
                });
            }
            let entry = parse_entry(&item.text, &item.key, item.line, item.val_col)?;
            a[(i - 1) * dim + (j - 1)] = Some(entry);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                match (a[i * dim + j].is_some(), a[j * dim + i].is_some()) {
                    (true, false) => a[j * dim + i] = a[i * dim + j].clone(),
                    (false, true) => a[i * dim + j] = a[j * dim + i].clone(),
                    _ => {}
                }
            }
        }
        let a: Vec<CoeffEntry> = a.into_iter().map(|e| e.unwrap_or_else(zero_entry)).collect();

        let mut b: Vec<Option<CoeffEntry>> = vec![None; dim];
        for item in raw.take_indexed("b")? {
            if item.indices.len() != 1 {
                return Err(Error::Parse {
                    line: item.line,
                    col: 1,
                    message: format!("drift entries use one index `b[i]`, got `{}`", item.key),
                });
            }
            let i = item.indices[0];
            if i == 0 || i > dim {
                return Err(Error::Parse {
                    line: item.line,
                    col: 1,
                    message: format!(
                        "index in `{}` must lie in 1..={dim} (it is 1-based)",
                        item.key
                    ),
                });
            }
            b[i - 1] = Some(parse_entry(&item.text, &item.key, item.line, item.val_col)?);
        }
        let b: Vec<CoeffEntry> = b.into_iter().map(|e| e.unwrap_or_else(zero_entry)).collect();
        let field = CoefficientField::new(dim, m, a, b)?;

        // Gauges and drift constants.
        let (v_text, v_line, v_col) = raw.require_str("V")?;
        let v = parse_gauge(&v_text, dim, "V", v_line, v_col)?;
        let w = match raw.take_str("W")? {
            Some((t, line, col)) => parse_gauge(&t, dim, "W", line, col)?,
            None => v.clone(),
        };
        let h = match raw.take_str("H")? {
            Some((t, line, col)) => parse_gauge(&t, dim, "H", line, col)?,
            None => parse_gauge("0", dim, "H", 0, 0)?,
        };
        let c = raw.require_num("lyap.c")?;
        let lambda = raw.require_num("lyap.lambda")?;
        let c1 = raw.take_num("lyap.c1")?.unwrap_or(0.0);
        let c2 = raw.take_num("lyap.c2")?.unwrap_or(0.0);
        let lyap = LyapunovSpec::new(v, w, h, c, lambda, c1, c2)?;
        let budget = match raw.take_num("lyap.r")? {
            Some(r) => r,
            None => c / lambda,
        };
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::config(format!(
                "moment budget is {budget}; set `lyap.r` to a positive value (default C/Lambda)"
            )));
        }

        // Working box.
        let domain = match (
            raw.take_num("domain.radius")?,
            raw.take_array("domain.lo")?,
            raw.take_array("domain.hi")?,
        ) {
            (Some(r), None, None) => Cube::symmetric(r, dim)?,
            (None, Some(lo), Some(hi)) => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::config(format!(
                        "`domain.lo`/`domain.hi` must each have {dim} entries"
                    )));
                }
                Cube::new(lo, hi)?
            }
            (None, None, None) => {
                return Err(Error::config(
                    "missing working box: set `domain.radius` or `domain.lo`/`domain.hi`",
                ))
            }
            _ => {
                return Err(Error::config(
                    "set either `domain.radius` or both `domain.lo` and `domain.hi`, not a mix",
                ))
            }
        };

        // Inner solver.
        let (backend_name, b_line, b_col) = raw.require_str("solver.backend")?;
        let backend = BackendKind::parse_name(&backend_name).map_err(|e| Error::Parse {
            line: b_line,
            col: b_col,
            message: e.to_string(),
        })?;
        let t_horizon = raw.take_num("solver.t")?.unwrap_or(DEFAULT_T);
        let solver = SolverSpec {
            backend,
            cells: raw.take_usize("solver.cells")?.unwrap_or(DEFAULT_CELLS),
            dt: raw.take_num("solver.dt")?.unwrap_or(DEFAULT_DT),
            t_horizon,
            burn_in: raw
                .take_num("solver.burn_in")?
                .unwrap_or(t_horizon / 10.0),
            particles: raw
                .take_usize("solver.particles")?
                .unwrap_or(DEFAULT_PARTICLES),
            blow_up: raw.take_num("solver.blow_up")?.unwrap_or(DEFAULT_BLOW_UP),
            max_atoms: raw
                .take_usize("solver.max_atoms")?
                .unwrap_or(DEFAULT_MAX_ATOMS),
        };

        // Outer iteration.
        let theta = raw.take_num("picard.theta")?.unwrap_or(DEFAULT_THETA);
        let max_iter = raw
            .take_usize("picard.max_iter")?
            .unwrap_or(DEFAULT_MAX_ITER);
        let tol = raw.take_num("picard.tol")?.unwrap_or(DEFAULT_TOL);
        let compress_cap = raw.take_usize("picard.compress_cap")?;

        let mut seed = raw.take_u64("seed")?.unwrap_or(0);
        if let Some(env) = env_seed_override(std::env::var("KOLMOFIX_SEED").ok().as_deref())? {
            seed = env;
        }

        // Starting measure.
        let init = match raw.take_str("init.kind")? {
            None => InitSpec::Dirac(vec![0.0; dim]),
            Some((kind, line, col)) => match kind.as_str() {
                "dirac" => InitSpec::Dirac(
                    raw.take_array("init.point")?.unwrap_or_else(|| vec![0.0; dim]),
                ),
                "atoms" => {
                    let points = raw.take_array("init.points")?.ok_or_else(|| {
                        Error::config("`init.kind = \"atoms\"` needs `init.points`")
                    })?;
                    let weights = raw.take_array("init.weights")?.ok_or_else(|| {
                        Error::config("`init.kind = \"atoms\"` needs `init.weights`")
                    })?;
                    InitSpec::Atoms { points, weights }
                }
                "gaussian" => InitSpec::GaussianSample {
                    n: raw.take_usize("init.samples")?.unwrap_or(400),
                },
                other => {
                    return Err(Error::Parse {
                        line,
                        col,
                        message: format!(
                            "unknown `init.kind` `{other}`; expected `dirac`, `atoms`, or `gaussian`"
                        ),
                    })
                }
            },
        };

        // Optional projection window over the leading coordinates.
        let window = if raw.has_prefix("window.") {
            let wm = raw.take_usize("window.m")?.unwrap_or_else(|| field.split_m());
            if wm == 0 || wm >= dim {
                return Err(Error::config(format!(
                    "`window.m` must lie strictly between 0 and dim = {dim}, got {wm}"
                )));
            }
            let r = raw.take_num("window.r")?.unwrap_or(DEFAULT_WINDOW_R);
            let s = raw.take_num("window.s")?.unwrap_or(DEFAULT_WINDOW_S);
            let k = raw.take_num("window.k")?.unwrap_or(1.0);
            let q = raw.take_num("window.q")?.unwrap_or(k + 1.5);
            let eta_one = raw.take_num("window.eta_one")?.unwrap_or(6.0);
            let eta_zero = raw.take_num("window.eta_zero")?.unwrap_or(8.0);
            if !(r > 1.0) {
                return Err(Error::config(format!(
                    "`window.r` must exceed 1, got {r}"
                )));
            }
            if !(s > 0.0) {
                return Err(Error::config(format!(
                    "`window.s` must be positive, got {s}"
                )));
            }
            if !(k > 0.0) || !(q > k) {
                return Err(Error::config(format!(
                    "window cubes need 0 < k < q, got k = {k}, q = {q}"
                )));
            }
            if !(eta_one > 0.0) || !(eta_zero > eta_one) {
                return Err(Error::config(format!(
                    "window weight radii need 0 < eta_one < eta_zero, got {eta_one}, {eta_zero}"
                )));
            }
            let eta = ClosureFn::new(dim - wm, move |z: &[f64]| {
                radial_cutoff(z, eta_one, eta_zero)
            });
            Some(ProjectionWindow {
                m: wm,
                eta: Arc::new(eta),
                k_y: Cube::symmetric(k, wm)?,
                q_y: Cube::symmetric(q, wm)?,
                r,
                s,
            })
        } else {
            None
        };

        // Smoothing schedule and checker budgets.
        let mollify_deltas = raw
            .take_array("mollify.deltas")?
            .unwrap_or_else(|| DEFAULT_MOLLIFY_DELTAS.to_vec());
        let mollify_tol = raw.take_num("mollify.tol")?.unwrap_or(DEFAULT_MOLLIFY_TOL);
        let verify_resolution = raw
            .take_usize("verify.resolution")?
            .unwrap_or(DEFAULT_VERIFY_RESOLUTION);
        let family_size = raw
            .take_usize("verify.family")?
            .unwrap_or(DEFAULT_FAMILY_SIZE);
        let hv_eps = raw.take_num("verify.hv_eps")?.unwrap_or(DEFAULT_HV_EPS);
        let pair_budget = raw
            .take_usize("verify.pairs")?
            .unwrap_or(DEFAULT_PAIR_BUDGET);
        if verify_resolution == 0 || family_size == 0 || pair_budget == 0 {
            return Err(Error::config(
                "`verify.resolution`, `verify.family`, and `verify.pairs` must be positive",
            ));
        }

        raw.finish()?;

        if domain.dim() != dim {
            return Err(Error::config("working box dimension must match `dim`"));
        }
        if lyap.dim() != dim {
            return Err(Error::config(format!(
                "gauge dimension {} does not match `dim` = {dim}",
                lyap.dim()
            )));
        }

        let problem = Problem {
            name,
            describe,
            field,
            lyap,
            budget,
            domain,
            solver,
            theta,
            max_iter,
            tol,
            compress_cap,
            seed,
            init,
            window,
            mollify_deltas,
            mollify_tol,
            verify_resolution,
            family_size,
            hv_eps,
            pair_budget,
        };
        // Surface numerical-parameter contradictions (step vs horizon,
        // damping range, atom shapes) at load time, not mid-run.
        problem.picard_config()?;
        problem.initial_measure()?;
        Ok(problem)
    }

    /// Read and assemble a problem file from disk; the file stem names the
    /// problem when it has no `name` key.
    pub fn load(path: &Path) -> Result<Problem> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read problem file `{}`: {e}", path.display()))
        })?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "problem".to_string());
        Problem::from_text(&text, &stem)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// The admissible moment class `{μ : ∫V dμ ≤ R}`.
    pub fn measure_class(&self) -> Result<MeasureClassConfig> {
        MeasureClassConfig::new(Arc::new(self.lyap.v.bind_free()?), self.budget)
    }

    /// The outer-iteration configuration this file describes.
    pub fn picard_config(&self) -> Result<PicardConfig> {
        let backend = self.solver.inner_backend(self.seed)?;
        let mut cfg = PicardConfig::new(
            self.theta,
            self.max_iter,
            self.tol,
            backend,
            self.measure_class()?,
            self.domain.clone(),
        )?
        .with_seed(self.seed);
        if let Some(cap) = self.compress_cap {
            cfg = cfg.with_compress_cap(cap);
        }
        Ok(cfg)
    }

    /// Build the starting measure (deterministic in the problem seed).
    pub fn initial_measure(&self) -> Result<Measure> {
        let d = self.dim();
        Ok(Measure::Discrete(match &self.init {
            InitSpec::Dirac(point) => {
                if point.len() != d {
                    return Err(Error::config(format!(
                        "`init.point` has {} coordinates, the problem has dimension {d}",
                        point.len()
                    )));
                }
                DiscreteMeasure::dirac(point)?
            }
            InitSpec::Atoms { points, weights } => {
                DiscreteMeasure::probability(d, points.clone(), weights.clone())?
            }
            InitSpec::GaussianSample { n } => {
                gaussian_sample(d, *n, derive_seed(self.seed, INIT_STREAM))?
            }
        }))
    }

    /// The seeded measure family used by the sampling checkers.
    pub fn check_family(&self) -> Result<Vec<Measure>> {
        crate::lyapunov::default_check_family(self.dim(), self.family_size, self.seed)
    }
}
