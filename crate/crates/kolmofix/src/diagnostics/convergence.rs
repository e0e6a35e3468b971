//! Coefficient-stability diagnostics: how much the frozen coefficients move
//! when the measure argument is replaced by an approximation, and how much
//! a leading-block mollification perturbs them. Both report sup-style gaps
//! integrated against a family of test measures on a fixed cube.

use crate::coeff::field::{BoundField, CoefficientField};
use crate::diagnostics::{log_log_slope, TrendPoint};
use crate::error::{Error, Result};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::{Measure, ProjectionWindow};
use crate::util::cube::Cube;
use rayon::prelude::*;
use serde::Serialize;

/// Allowed relative increase of the smoothing gap per schedule step before
/// the trend is declared non-decreasing.
pub const MOLLIFY_SLACK: f64 = 0.1;

const DEFAULT_NODES: usize = 64;

/// One coefficient slot: a diffusion entry (upper triangle) or a drift
/// component.
#[derive(Clone, Copy)]
enum Slot {
    A(usize, usize),
    B(usize),
}

fn slots(dim: usize) -> Vec<Slot> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2 + dim);
    for i in 0..dim {
        for j in i..dim {
            out.push(Slot::A(i, j));
        }
    }
    for i in 0..dim {
        out.push(Slot::B(i));
    }
    out
}

fn eval_slot(bound: &BoundField, slot: Slot, x: &[f64]) -> Result<f64> {
    match slot {
        Slot::A(i, j) => bound.eval_a(i, j, x),
        Slot::B(i) => bound.eval_b(i, x),
    }
}

/// Gap trend along a measure sequence.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// `(parameter, gap)` per sequence member; the parameter is the atom
    /// count when the sequence sizes strictly increase, the 1-based index
    /// otherwise.
    pub gaps: Vec<TrendPoint>,
    pub final_gap: f64,
    /// Log-log slope of the gap against the parameter, when defined.
    pub fit_exponent: Option<f64>,
    pub monotone_nonincreasing: bool,
    pub note: String,
}

fn checked_atoms(
    label: &str,
    measures: &[Measure],
    dim: usize,
) -> Result<Vec<DiscreteMeasure>> {
    if measures.is_empty() {
        return Err(Error::config(format!("need at least one {label} measure")));
    }
    measures
        .iter()
        .map(|mu| {
            if mu.dim() != dim {
                return Err(Error::config(format!(
                    "{label} measure has dimension {}, the field has {dim}",
                    mu.dim()
                )));
            }
            mu.to_atoms()
        })
        .collect()
}

/// Largest per-slot gap between two frozen fields, integrated against the
/// worst of the test atom clouds, restricted to `k`.
fn frozen_gap(
    left: &BoundField,
    right: &BoundField,
    tests: &[DiscreteMeasure],
    slot_list: &[Slot],
    k: &Cube,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for atoms in tests {
        for &slot in slot_list {
            let mut acc = 0.0;
            for idx in 0..atoms.n_atoms() {
                let x = atoms.point(idx);
                if !k.contains(x) {
                    continue;
                }
                let gap = (eval_slot(left, slot, x)? - eval_slot(right, slot, x)?).abs();
                acc += atoms.weights()[idx] * gap;
            }
            worst = worst.max(acc);
        }
    }
    Ok(worst)
}

/// How fast the frozen coefficients stabilize along a measure sequence
/// `sigma_seq` approaching `sigma_limit`: for each member, the largest
/// single-entry gap `∫_K |c(x, σ_n) − c(x, σ)| dμ(x)` over the test
/// measures. Fields that ignore their measure argument report zero gaps.
pub fn coefficient_convergence(
    field: &CoefficientField,
    sigma_seq: &[Measure],
    sigma_limit: &Measure,
    test_measures: &[Measure],
    k: &Cube,
) -> Result<ConvergenceReport> {
    let d = field.dim();
    if k.dim() != d {
        return Err(Error::config(format!(
            "integration cube has dimension {}, the field has {d}",
            k.dim()
        )));
    }
    if sigma_seq.is_empty() {
        return Err(Error::config("need at least one sequence measure"));
    }
    if sigma_limit.dim() != d {
        return Err(Error::config(format!(
            "limit measure has dimension {}, the field has {d}",
            sigma_limit.dim()
        )));
    }
    let tests = checked_atoms("test", test_measures, d)?;
    let slot_list = slots(d);
    let bound_limit = field.bind(sigma_limit)?;

    let values: Vec<(usize, f64)> = sigma_seq
        .par_iter()
        .map(|sigma| -> Result<(usize, f64)> {
            if sigma.dim() != d {
                return Err(Error::config(format!(
                    "sequence measure has dimension {}, the field has {d}",
                    sigma.dim()
                )));
            }
            let bound_n = field.bind(sigma)?;
            let gap = frozen_gap(&bound_n, &bound_limit, &tests, &slot_list, k)?;
            Ok((sigma.to_atoms()?.n_atoms(), gap))
        })
        .collect::<Result<Vec<_>>>()?;

    let counts_increase = values.windows(2).all(|w| w[1].0 > w[0].0);
    let gaps: Vec<TrendPoint> = values
        .iter()
        .enumerate()
        .map(|(i, &(count, gap))| TrendPoint {
            param: if counts_increase {
                count as f64
            } else {
                (i + 1) as f64
            },
            value: gap,
        })
        .collect();
    let final_gap = gaps.last().map(|p| p.value).unwrap_or(0.0);
    let monotone_nonincreasing = gaps
        .windows(2)
        .all(|w| w[1].value <= w[0].value * (1.0 + 1e-12) + 1e-300);
    let fit_exponent = log_log_slope(&gaps);
    let note = format!(
        "largest single-entry gap against {} test measures on the cube; \
         trend parameter: {}",
        tests.len(),
        if counts_increase {
            "sequence atom counts"
        } else {
            "1-based sequence index"
        },
    );
    Ok(ConvergenceReport {
        gaps,
        final_gap,
        fit_exponent,
        monotone_nonincreasing,
        note,
    })
}

/// Settings for the leading-block smoothing diagnostic.
#[derive(Clone)]
pub struct MollifierConfig {
    /// Leading-block geometry: split index `m`, norm cube, and the enlarged
    /// cube whose margin absorbs the kernel support.
    pub window: ProjectionWindow,
    /// Smoothing radii, strictly decreasing.
    pub deltas: Vec<f64>,
    /// Midpoint quadrature nodes per leading axis for the kernel average.
    pub nodes: usize,
    /// Final-gap threshold for the pass verdict.
    pub tol: f64,
}

impl MollifierConfig {
    pub fn new(window: ProjectionWindow, deltas: Vec<f64>, tol: f64) -> Result<Self> {
        let cfg = MollifierConfig {
            window,
            deltas,
            nodes: DEFAULT_NODES,
            tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Result<Self> {
        self.nodes = nodes;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() {
            return Err(Error::config("need at least one smoothing radius"));
        }
        for w in self.deltas.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::config(
                    "smoothing radii must be strictly decreasing",
                ));
            }
        }
        let first = self.deltas[0];
        if !(*self.deltas.last().unwrap() > 0.0) || !first.is_finite() {
            return Err(Error::config("smoothing radii must be positive and finite"));
        }
        if self.nodes < 2 {
            return Err(Error::config("kernel quadrature needs at least 2 nodes"));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::config("pass tolerance must be positive"));
        }
        let margin = self.window.q_y.boundary_margin(&self.window.k_y);
        if margin < 1.0 - 1e-12 {
            return Err(Error::config(format!(
                "enclosing-cube margin must be at least 1, got {margin}"
            )));
        }
        if first > 2.0 * margin {
            return Err(Error::config(format!(
                "largest smoothing radius {first} exceeds twice the margin {margin}"
            )));
        }
        Ok(())
    }
}

/// Smoothing trend of the coefficients along a shrinking radius schedule.
#[derive(Clone, Debug, Serialize)]
pub struct MollifierReport {
    /// `(radius, gap)` per schedule entry.
    pub gaps: Vec<TrendPoint>,
    pub final_gap: f64,
    pub tolerance: f64,
    /// Gaps never grew by more than the allowed slack per step.
    pub nonincreasing: bool,
    /// Nonincreasing and the final gap is within the tolerance.
    pub pass: bool,
    pub note: String,
}

/// Average of a frozen slot over the box kernel of radius `delta/2` in the
/// leading `m` coordinates, by midpoint quadrature.
fn smoothed_slot(
    bound: &BoundField,
    slot: Slot,
    x: &[f64],
    m: usize,
    delta: f64,
    nodes: usize,
) -> Result<f64> {
    let kernel = Cube::symmetric(0.5 * delta, m)?;
    let mut shifted = x.to_vec();
    let mut acc = 0.0f64;
    let mut first_err: Option<Error> = None;
    kernel.for_each_midpoint(nodes, |u| {
        if first_err.is_some() {
            return;
        }
        for j in 0..m {
            shifted[j] = x[j] - u[j];
        }
        match eval_slot(bound, slot, &shifted) {
            Ok(v) => acc += v,
            Err(e) => first_err = Some(e),
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(acc / (nodes as f64).powi(m as i32))
}

/// How much box-kernel smoothing in the leading block moves the frozen
/// coefficients: for each radius in the schedule, the largest single-entry
/// gap `∫_K |c(x, σ) − (c smoothed)(x, σ)| dμ(x)` over all pairs of a
/// freezing measure σ and an integration measure μ drawn from the test
/// set. Constants are reproduced exactly by the kernel average, so their
/// gap is zero; a jump produces a gap proportional to the radius.
pub fn mollification_convergence(
    field: &CoefficientField,
    cfg: &MollifierConfig,
    test_measures: &[Measure],
    k: &Cube,
) -> Result<MollifierReport> {
    cfg.validate()?;
    let d = field.dim();
    let m = field.split_m();
    if m == 0 {
        return Err(Error::config(
            "smoothing diagnostic needs a leading block (split index m >= 1)",
        ));
    }
    if cfg.window.m != m {
        return Err(Error::config(format!(
            "window split {} does not match the field split {m}",
            cfg.window.m
        )));
    }
    if cfg.window.k_y.dim() != m || cfg.window.q_y.dim() != m {
        return Err(Error::config(
            "window cubes must live in the leading block dimension",
        ));
    }
    if k.dim() != d {
        return Err(Error::config(format!(
            "integration cube has dimension {}, the field has {d}",
            k.dim()
        )));
    }
    let tests = checked_atoms("test", test_measures, d)?;
    let slot_list = slots(d);
    let bounds: Vec<BoundField> = test_measures
        .iter()
        .map(|sigma| field.bind(sigma))
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<f64> = cfg
        .deltas
        .par_iter()
        .map(|&delta| -> Result<f64> {
            let mut worst = 0.0f64;
            for bound in &bounds {
                for atoms in &tests {
                    for &slot in &slot_list {
                        let mut acc = 0.0;
                        for idx in 0..atoms.n_atoms() {
                            let x = atoms.point(idx);
                            if !k.contains(x) {
                                continue;
                            }
                            let exact = eval_slot(bound, slot, x)?;
                            let smooth =
                                smoothed_slot(bound, slot, x, m, delta, cfg.nodes)?;
                            acc += atoms.weights()[idx] * (exact - smooth).abs();
                        }
                        worst = worst.max(acc);
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;

    let gaps: Vec<TrendPoint> = cfg
        .deltas
        .iter()
        .zip(&values)
        .map(|(&delta, &value)| TrendPoint {
            param: delta,
            value,
        })
        .collect();
    let final_gap = gaps.last().map(|p| p.value).unwrap_or(0.0);
    let nonincreasing = gaps
        .windows(2)
        .all(|w| w[1].value <= w[0].value * (1.0 + MOLLIFY_SLACK) + 1e-300);
    let pass = nonincreasing && final_gap <= cfg.tol;
    let note = format!(
        "box kernel, {} nodes per leading axis, {} freezing x {} integration \
         measures; largest single-entry gap on the cube",
        cfg.nodes,
        bounds.len(),
        tests.len(),
    );
    Ok(MollifierReport {
        gaps,
        final_gap,
        tolerance: cfg.tol,
        nonincreasing,
        pass,
        note,
    })
}
