//! Sampled verification of the drift conditions: pointwise on a grid,
//! integrated over a measure family, at the origin, and as a moment bound
//! on a computed solution.

use crate::coeff::field::CoefficientField;
use crate::error::{Error, Result};
use crate::func::{C2Fn, ScalarFn};
use crate::lyapunov::generator::generator_value;
use crate::lyapunov::{
    violation_tol, BestFit, ConditionReport, ExprFn, LyapunovSpec, Witness, ABS_TOL,
    FAMILY_RADIUS, MAX_WITNESSES, NONNEG_TOL, REL_TOL,
};
use crate::measure::ops::lyapunov_integral;
use crate::measure::Measure;
use crate::util::cube::Cube;
use rayon::prelude::*;

/// Radius of the rays along which the gauge's growth toward infinity is
/// proxy-checked (twice the family box).
const GROWTH_PROXY_RADIUS: f64 = 2.0 * FAMILY_RADIUS;

fn tolerance_note() -> String {
    format!("violation tolerance {ABS_TOL:.0e} absolute + {REL_TOL:.0e} x scale")
}

/// Check `L_μV(x) ≤ C − ΛV(x)` at every midpoint of `resolution^d` cells of
/// `domain`, for every measure in `measures`. Pass means no sampled pair
/// violated beyond tolerance; each violation is recorded with its point.
pub fn check_pointwise(
    field: &CoefficientField,
    v: &dyn C2Fn,
    c: f64,
    lambda: f64,
    domain: &Cube,
    resolution: usize,
    measures: &[Measure],
) -> Result<ConditionReport> {
    let d = field.dim();
    if v.dim() != d || domain.dim() != d {
        return Err(Error::config(format!(
            "dimension mismatch: field {d}, gauge {}, domain {}",
            v.dim(),
            domain.dim()
        )));
    }
    if resolution == 0 {
        return Err(Error::config("grid resolution must be positive"));
    }
    if !c.is_finite() || !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::config(
            "pointwise check needs finite C and strictly positive Lambda",
        ));
    }
    if measures.is_empty() {
        return Err(Error::config("pointwise check needs at least one measure"));
    }

    struct Part {
        worst: f64,
        violations: Vec<Witness>,
        checked: usize,
    }
    let parts: Vec<Part> = measures
        .par_iter()
        .enumerate()
        .map(|(k, mu)| -> Result<Part> {
            let bound = field.bind(mu)?;
            let mut grad = vec![0.0; d];
            let mut hess = vec![0.0; d * d];
            let mut part = Part {
                worst: f64::INFINITY,
                violations: Vec::new(),
                checked: 0,
            };
            let mut first_err: Option<Error> = None;
            domain.for_each_midpoint(resolution, |x| {
                if first_err.is_some() {
                    return;
                }
                part.checked += 1;
                let lv = match generator_value(&bound, v, x, &mut grad, &mut hess) {
                    Ok(t) => t,
                    Err(e) => {
                        first_err = Some(e);
                        return;
                    }
                };
                let vx = v.value(x);
                if !vx.is_finite() {
                    first_err = Some(Error::NonFinite {
                        what: "gauge V".into(),
                        point: x.to_vec(),
                    });
                    return;
                }
                if vx < -NONNEG_TOL && part.violations.len() < MAX_WITNESSES {
                    part.violations.push(Witness {
                        x: x.to_vec(),
                        measure_index: k,
                        detail: format!("gauge V is negative: {vx:e}"),
                    });
                }
                let rhs = c - lambda * vx;
                let slack = rhs - lv;
                part.worst = part.worst.min(slack);
                if slack < -violation_tol(lv, rhs) && part.violations.len() < MAX_WITNESSES {
                    part.violations.push(Witness {
                        x: x.to_vec(),
                        measure_index: k,
                        detail: format!(
                            "L V = {lv:.6e} > C - Lambda V = {rhs:.6e} (slack {slack:.3e})"
                        ),
                    });
                }
            });
            if let Some(e) = first_err {
                return Err(e);
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ConditionReport {
        name: "pointwise drift condition".into(),
        pass: true,
        checked: 0,
        worst_slack: f64::INFINITY,
        best_fit: None,
        violations: Vec::new(),
        note: None,
    };
    for part in parts {
        report.checked += part.checked;
        report.worst_slack = report.worst_slack.min(part.worst);
        for w in part.violations {
            if report.violations.len() < MAX_WITNESSES {
                report.violations.push(w);
            }
        }
    }
    report.pass = report.violations.is_empty();
    report.note = Some(format!(
        "sampled {} measures x {} grid midpoints; a sample, not a certificate; {}",
        measures.len(),
        resolution.pow(d as u32),
        tolerance_note()
    ));
    Ok(report)
}

/// Exact summation of the generator of `w(·, μ)` against the atom cloud
/// `μ`: `∫ L_μ w dμ`. The measure must be an atom cloud.
pub fn integral_drift(field: &CoefficientField, w: &ExprFn, mu: &Measure) -> Result<f64> {
    let d = field.dim();
    if w.dim() != d {
        return Err(Error::config(format!(
            "gauge dimension {} does not match field dimension {d}",
            w.dim()
        )));
    }
    w.require_derivatives()?;
    let cloud = match mu {
        Measure::Discrete(m) => m,
        Measure::Grid(_) => {
            return Err(Error::config(
                "integral drift check expects particle-cloud measures, got a grid density",
            ))
        }
    };
    let bound = field.bind(mu)?;
    let wk = w.bind(mu)?;
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut total = 0.0f64;
    for (ai, xa) in cloud.points_flat().chunks(d).enumerate() {
        let lw = generator_value(&bound, &wk, xa, &mut grad, &mut hess)?;
        total += cloud.weights()[ai] * lw;
    }
    Ok(total)
}

/// Check `∫L_μW dμ ≤ C − Λ∫V dμ` for every atom cloud in `measures`, with
/// the gauge `W(·, μ)` rebound per measure. Also reports the constants that
/// fit the sampled family with the least average slack.
pub fn check_integral(
    field: &CoefficientField,
    spec: &LyapunovSpec,
    measures: &[Measure],
) -> Result<ConditionReport> {
    let d = field.dim();
    if spec.dim() != d {
        return Err(Error::config(format!(
            "spec dimension {} does not match field dimension {d}",
            spec.dim()
        )));
    }
    spec.w.require_derivatives()?;
    if measures.is_empty() {
        return Err(Error::config("integral check needs at least one measure"));
    }
    let v_bound = spec.v.bind_free()?;

    struct Part {
        lhs: f64,
        v_int: f64,
        violations: Vec<Witness>,
        rays_bad: usize,
    }
    let parts: Vec<Part> = measures
        .par_iter()
        .enumerate()
        .map(|(k, mu)| -> Result<Part> {
            let cloud = match mu {
                Measure::Discrete(m) => m,
                Measure::Grid(_) => {
                    return Err(Error::config(format!(
                        "integral check expects particle-cloud measures; measure {k} is a grid density"
                    )))
                }
            };
            let bound = field.bind(mu)?;
            let wk = spec.w.bind(mu)?;
            let mut grad = vec![0.0; d];
            let mut hess = vec![0.0; d * d];
            let mut part = Part {
                lhs: 0.0,
                v_int: lyapunov_integral(mu, &v_bound)?,
                violations: Vec::new(),
                rays_bad: 0,
            };
            for (ai, xa) in cloud.points_flat().chunks(d).enumerate() {
                let lw = generator_value(&bound, &wk, xa, &mut grad, &mut hess)?;
                part.lhs += cloud.weights()[ai] * lw;
                for (name, val) in [("W", wk.value(xa)), ("V", v_bound.value(xa))] {
                    if !val.is_finite() {
                        return Err(Error::NonFinite {
                            what: format!("gauge {name}"),
                            point: xa.to_vec(),
                        });
                    }
                    if val < -NONNEG_TOL && part.violations.len() < MAX_WITNESSES {
                        part.violations.push(Witness {
                            x: xa.to_vec(),
                            measure_index: k,
                            detail: format!("gauge {name} is negative: {val:e}"),
                        });
                    }
                }
            }
            // Growth proxy: the gauge should be non-decreasing along each
            // axis ray approaching the working region's far boundary.
            for i in 0..d {
                for sgn in [-1.0, 1.0] {
                    let probe = [0.8, 0.9, 1.0].map(|t| {
                        let mut x = vec![0.0; d];
                        x[i] = sgn * t * GROWTH_PROXY_RADIUS;
                        wk.value(&x)
                    });
                    if !(probe[0] <= probe[1] && probe[1] <= probe[2]) {
                        part.rays_bad += 1;
                    }
                }
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ConditionReport {
        name: "H3.1".into(),
        pass: true,
        checked: measures.len(),
        worst_slack: f64::INFINITY,
        best_fit: None,
        violations: Vec::new(),
        note: None,
    };
    let mut rays_bad = 0usize;
    for (k, part) in parts.iter().enumerate() {
        rays_bad += part.rays_bad;
        for w in &part.violations {
            if report.violations.len() < MAX_WITNESSES {
                report.violations.push(w.clone());
            }
        }
        let rhs = spec.c - spec.lambda * part.v_int;
        let slack = rhs - part.lhs;
        report.worst_slack = report.worst_slack.min(slack);
        if slack < -violation_tol(part.lhs, rhs) && report.violations.len() < MAX_WITNESSES {
            report.violations.push(Witness {
                x: vec![],
                measure_index: k,
                detail: format!(
                    "integral L W = {:.6e} > C - Lambda integral V = {:.6e} (slack {:.3e})",
                    part.lhs, rhs, slack
                ),
            });
        }
    }
    report.pass = report.violations.is_empty();

    // Least-average-slack constants on a logarithmic Lambda grid: for each
    // Lambda the smallest admissible C (clamped at zero), then the pair
    // whose average margin over the family is smallest.
    let mean_lhs = parts.iter().map(|p| p.lhs).sum::<f64>() / parts.len() as f64;
    let mean_v = parts.iter().map(|p| p.v_int).sum::<f64>() / parts.len() as f64;
    let mut best: Option<(f64, BestFit)> = None;
    for j in 0..=56 {
        let lam = 2f64.powf((j as f64 - 28.0) / 4.0);
        let mut cc = f64::NEG_INFINITY;
        for p in &parts {
            cc = cc.max(p.lhs + lam * p.v_int);
        }
        let cc = cc.max(0.0);
        let mean_slack = cc - (mean_lhs + lam * mean_v);
        if best.as_ref().is_none_or(|(s, _)| mean_slack < *s) {
            best = Some((
                mean_slack,
                BestFit {
                    c: cc,
                    lambda: lam,
                    radius: cc / lam,
                },
            ));
        }
    }
    report.best_fit = best.map(|(_, b)| b);
    report.note = Some(format!(
        "sampled {} particle clouds; a sample over the measure family, not a certificate; {}; \
         gauge growth at infinity proxy-checked along {} rays per cloud ({} non-monotone)",
        measures.len(),
        tolerance_note(),
        2 * d,
        rays_bad
    ));
    Ok(report)
}

/// Boundary-shell sample of a box: all corners plus the center of each face.
fn shell_points(domain: &Cube) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let mut pts = Vec::new();
    if d <= 16 {
        for mask in 0usize..(1 << d) {
            pts.push(
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            domain.hi[i]
                        } else {
                            domain.lo[i]
                        }
                    })
                    .collect(),
            );
        }
    }
    let mid: Vec<f64> = (0..d).map(|i| 0.5 * (domain.lo[i] + domain.hi[i])).collect();
    for i in 0..d {
        for side in [domain.lo[i], domain.hi[i]] {
            let mut x = mid.clone();
            x[i] = side;
            pts.push(x);
        }
    }
    pts
}

/// Check `−L_μW(0, μ) ≤ C₁ + C₂∫H dμ` for every measure, and the decay
/// proxy `H/V ≤ ratio_eps` on the boundary shell of `domain`.
pub fn check_h32(
    field: &CoefficientField,
    spec: &LyapunovSpec,
    domain: &Cube,
    measures: &[Measure],
    ratio_eps: f64,
) -> Result<ConditionReport> {
    let d = field.dim();
    if spec.dim() != d || domain.dim() != d {
        return Err(Error::config(format!(
            "dimension mismatch: field {d}, spec {}, domain {}",
            spec.dim(),
            domain.dim()
        )));
    }
    if !(ratio_eps > 0.0) || !ratio_eps.is_finite() {
        return Err(Error::config("H/V ceiling must be finite and positive"));
    }
    if measures.is_empty() {
        return Err(Error::config("origin check needs at least one measure"));
    }
    spec.w.require_derivatives()?;
    let h_bound = spec.h.bind_free()?;
    let v_bound = spec.v.bind_free()?;
    let origin = vec![0.0f64; d];

    struct Part {
        lhs: f64,
        h_int: f64,
        violations: Vec<Witness>,
    }
    let parts: Vec<Part> = measures
        .par_iter()
        .enumerate()
        .map(|(k, mu)| -> Result<Part> {
            let bound = field.bind(mu)?;
            let wk = spec.w.bind(mu)?;
            let mut grad = vec![0.0; d];
            let mut hess = vec![0.0; d * d];
            let lhs = -generator_value(&bound, &wk, &origin, &mut grad, &mut hess)?;
            let h_int = lyapunov_integral(mu, &h_bound)?;
            let mut violations = Vec::new();
            if h_int < -NONNEG_TOL {
                violations.push(Witness {
                    x: vec![],
                    measure_index: k,
                    detail: format!("integral of H is negative: {h_int:e}"),
                });
            }
            Ok(Part {
                lhs,
                h_int,
                violations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ConditionReport {
        name: "H3.2".into(),
        pass: true,
        checked: measures.len(),
        worst_slack: f64::INFINITY,
        best_fit: None,
        violations: Vec::new(),
        note: None,
    };
    for (k, part) in parts.iter().enumerate() {
        for w in &part.violations {
            if report.violations.len() < MAX_WITNESSES {
                report.violations.push(w.clone());
            }
        }
        let rhs = spec.c1 + spec.c2 * part.h_int;
        let slack = rhs - part.lhs;
        report.worst_slack = report.worst_slack.min(slack);
        if slack < -violation_tol(part.lhs, rhs) && report.violations.len() < MAX_WITNESSES {
            report.violations.push(Witness {
                x: origin.clone(),
                measure_index: k,
                detail: format!(
                    "-L W(0) = {:.6e} > C1 + C2 integral H = {:.6e} (slack {:.3e})",
                    part.lhs, rhs, slack
                ),
            });
        }
    }

    // Decay proxy on the boundary shell; measure-independent, checked once.
    let shell = shell_points(domain);
    for x in &shell {
        let h = h_bound.value(x);
        let v = v_bound.value(x);
        if !h.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite {
                what: "comparison gauge on the boundary shell".into(),
                point: x.clone(),
            });
        }
        if h < -NONNEG_TOL && report.violations.len() < MAX_WITNESSES {
            report.violations.push(Witness {
                x: x.clone(),
                measure_index: 0,
                detail: format!("boundary proxy: H is negative ({h:e})"),
            });
        }
        let ratio = if v > NONNEG_TOL {
            h.max(0.0) / v
        } else if h <= NONNEG_TOL {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > ratio_eps && report.violations.len() < MAX_WITNESSES {
            report.violations.push(Witness {
                x: x.clone(),
                measure_index: 0,
                detail: format!(
                    "boundary proxy: H/V = {ratio:.4e} exceeds the ceiling {ratio_eps}"
                ),
            });
        }
    }
    report.pass = report.violations.is_empty();
    report.note = Some(format!(
        "sampled {} measures at the origin; H/V <= {ratio_eps} proxy on {} boundary-shell \
         points stands in for decay at infinity; {}",
        measures.len(),
        shell.len(),
        tolerance_note()
    ));
    Ok(report)
}

/// Check `∫V dμ ≤ (C/Λ)(1 + slack)` for a computed solution.
pub fn verify_moment_bound(
    solution: &Measure,
    v: &dyn ScalarFn,
    c: f64,
    lambda: f64,
    slack: f64,
) -> Result<ConditionReport> {
    if v.dim() != solution.dim() {
        return Err(Error::config(format!(
            "gauge dimension {} does not match solution dimension {}",
            v.dim(),
            solution.dim()
        )));
    }
    if !c.is_finite() || c < 0.0 || !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::config(
            "moment bound needs nonnegative C and strictly positive Lambda",
        ));
    }
    if !slack.is_finite() || slack < 0.0 {
        return Err(Error::config("moment-bound slack must be nonnegative"));
    }
    let integral = lyapunov_integral(solution, v)?;
    let bound = c / lambda * (1.0 + slack);
    let margin = bound - integral;
    let pass = margin >= 0.0;
    Ok(ConditionReport {
        name: "moment bound".into(),
        pass,
        checked: 1,
        worst_slack: margin,
        best_fit: None,
        violations: if pass {
            vec![]
        } else {
            vec![Witness {
                x: vec![],
                measure_index: 0,
                detail: format!(
                    "integral V = {integral:.6e} exceeds (C/Lambda)(1+slack) = {bound:.6e}"
                ),
            }]
        },
        note: Some(format!(
            "integral V = {integral:.6e}; admissible radius (C/Lambda)(1+{slack}) = {bound:.6e}"
        )),
    })
}
