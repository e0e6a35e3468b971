//! Sampling checkers for the structural coefficient hypotheses: leading
//! block positive-definiteness, boundedness on cubes, and continuity in the
//! degenerate directions measured by an empirical monotone modulus.

use crate::coeff::field::CoefficientField;
use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::util::cube::Cube;
use crate::util::isotonic::isotonic_non_decreasing;
use crate::util::linalg::min_eigenvalue;
use crate::util::rng::stream_rng;
use rand::Rng;
use serde::Serialize;

/// Positive-definiteness slack: eigenvalues above this pass.
pub const PSD_TOL: f64 = -1e-10;
/// Positivity threshold for the leading-block estimate.
pub const H11_TOL: f64 = 1e-10;
/// Number of logarithmic separation bins for the continuity modulus.
pub const MODULUS_BINS: usize = 32;
/// Witness cap so reports stay readable.
const MAX_WITNESSES: usize = 50;

/// One offending sample.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    /// State point of the violation.
    pub x: Vec<f64>,
    /// Index of the measure (into the caller's family) in force.
    pub measure_index: usize,
    /// What went wrong.
    pub detail: String,
}

/// Result of one hypothesis checker run.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    /// Which hypothesis this report covers.
    pub name: String,
    /// Overall verdict over all samples.
    pub pass: bool,
    /// Smallest leading-block eigenvalue seen (block checker only).
    pub lambda_est: Option<f64>,
    /// Largest coefficient magnitude sum seen (sup checker only).
    pub sup_bound_est: Option<f64>,
    /// Monotone envelope samples `(separation, gap)`, ascending separation.
    pub modulus_samples: Vec<(f64, f64)>,
    /// Offending samples (capped).
    pub violations: Vec<Witness>,
    /// Free-text caveats (sampling disclaimers, trivial-pass reasons).
    pub note: Option<String>,
}

impl AssumptionReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            pass: true,
            lambda_est: None,
            sup_bound_est: None,
            modulus_samples: Vec::new(),
            violations: Vec::new(),
            note: None,
        }
    }

    fn add_witness(&mut self, x: &[f64], measure_index: usize, detail: String) {
        self.pass = false;
        if self.violations.len() < MAX_WITNESSES {
            self.violations.push(Witness {
                x: x.to_vec(),
                measure_index,
                detail,
            });
        }
    }
}

/// Leading-block positive definiteness over a cube and a measure family:
/// estimates the worst-case smallest eigenvalue of the upper-left `m×m`
/// block of `a`, and also records any full-matrix PSD violation.
pub fn check_h11(
    field: &CoefficientField,
    k: &Cube,
    measures: &[Measure],
    resolution: usize,
) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::new("H1.1");
    let d = field.dim();
    let m = field.split_m();
    if k.dim() != d {
        return Err(Error::config("cube dimension must match the field"));
    }
    if m == 0 {
        report.note = Some(
            "m = 0: no non-degenerate block is claimed, the condition holds trivially".into(),
        );
        return Ok(report);
    }
    let mut lambda_min = f64::INFINITY;
    let mut a_full = vec![0.0f64; d * d];
    let mut block = vec![0.0f64; m * m];
    for (mi, mu) in measures.iter().enumerate() {
        let bound = field.bind(mu)?;
        let mut first_err: Option<(Vec<f64>, String)> = None;
        k.for_each_midpoint(resolution, |x| {
            if first_err.is_some() {
                return;
            }
            match bound.a_matrix(x, &mut a_full) {
                Ok(()) => {
                    // Full-matrix nonnegativity.
                    let full_min = min_eigenvalue(&a_full, d);
                    if full_min < PSD_TOL {
                        report.add_witness(
                            x,
                            mi,
                            format!("diffusion matrix has eigenvalue {full_min:.3e} < 0"),
                        );
                    }
                    // Leading-block positivity.
                    for i in 0..m {
                        for j in 0..m {
                            block[i * m + j] = a_full[i * d + j];
                        }
                    }
                    let lam = min_eigenvalue(&block, m);
                    if lam < lambda_min {
                        lambda_min = lam;
                    }
                    if lam <= H11_TOL {
                        report.add_witness(
                            x,
                            mi,
                            format!("leading {m}x{m} block eigenvalue {lam:.3e} not positive"),
                        );
                    }
                }
                Err(e) => first_err = Some((x.to_vec(), e.to_string())),
            }
        });
        if let Some((x, msg)) = first_err {
            report.add_witness(&x, mi, msg);
        }
    }
    report.lambda_est = Some(if lambda_min.is_finite() {
        lambda_min
    } else {
        0.0
    });
    report.note.get_or_insert_with(|| {
        format!(
            "sampled {} measures x {} grid points per axis; a sample, not a certificate",
            measures.len(),
            resolution
        )
    });
    Ok(report)
}

/// Boundedness: the largest value of `Σ|a^{ij}| + Σ|b^i|` over the cube and
/// the measure family; fails only on non-finite coefficient values.
pub fn check_h12(
    field: &CoefficientField,
    k: &Cube,
    measures: &[Measure],
    resolution: usize,
) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::new("H1.2");
    let d = field.dim();
    if k.dim() != d {
        return Err(Error::config("cube dimension must match the field"));
    }
    let mut sup = 0.0f64;
    let mut a_full = vec![0.0f64; d * d];
    let mut b_vec = vec![0.0f64; d];
    for (mi, mu) in measures.iter().enumerate() {
        let bound = field.bind(mu)?;
        k.for_each_midpoint(resolution, |x| {
            let ok = bound.a_matrix(x, &mut a_full).and_then(|_| bound.b_vector(x, &mut b_vec));
            match ok {
                Ok(()) => {
                    let total: f64 = a_full.iter().map(|v| v.abs()).sum::<f64>()
                        + b_vec.iter().map(|v| v.abs()).sum::<f64>();
                    if !total.is_finite() {
                        report.add_witness(x, mi, "non-finite coefficient value".into());
                    } else if total > sup {
                        sup = total;
                    }
                }
                Err(e) => report.add_witness(x, mi, e.to_string()),
            }
        });
    }
    report.sup_bound_est = Some(sup);
    report.note = Some(format!(
        "sup over {} measures x {} grid points per axis",
        measures.len(),
        resolution
    ));
    Ok(report)
}

/// Continuity in the degenerate directions: draws pairs of states that
/// share their leading block and differ in the trailing block, drives each
/// pair toward its steepest feature by bisection so that discontinuities
/// are still visible at tiny separations, bins the observed coefficient
/// gaps by separation (32 logarithmic bins), and fits a monotone
/// non-decreasing envelope. Passes when the envelope vanishes at small
/// separations (no jump) and every evaluation is finite.
pub fn check_h13(
    field: &CoefficientField,
    k: &Cube,
    measures: &[Measure],
    pair_budget: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::new("H1.3");
    let d = field.dim();
    let m = field.split_m();
    if k.dim() != d {
        return Err(Error::config("cube dimension must match the field"));
    }
    if m == d {
        report.note = Some(
            "no degenerate directions (m = d): the modulus is identically zero".into(),
        );
        return Ok(report);
    }
    if measures.is_empty() {
        return Err(Error::config("continuity check needs at least one measure"));
    }
    let nz = d - m;
    let z_widths: Vec<f64> = (m..d).map(|j| k.hi[j] - k.lo[j]).collect();
    let max_sep = z_widths.iter().cloned().fold(0.0f64, f64::max);
    if max_sep <= 0.0 {
        return Err(Error::config("cube has no extent in the degenerate directions"));
    }
    let min_sep = max_sep * 1e-4;

    let bounds = measures
        .iter()
        .map(|mu| field.bind(mu))
        .collect::<Result<Vec<_>>>()?;

    // Evaluate every independent entry (upper triangle of a, then b) at x.
    let eval_all = |bound: &crate::coeff::field::BoundField, x: &[f64]| -> Result<Vec<f64>> {
        let mut vals = Vec::with_capacity(d * (d + 1) / 2 + d);
        for i in 0..d {
            for j in i..d {
                vals.push(bound.eval_a(i, j, x)?);
            }
            vals.push(bound.eval_b(i, x)?);
        }
        for v in &vals {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "coefficient value".into(),
                    point: x.to_vec(),
                });
            }
        }
        Ok(vals)
    };
    let max_diff = |p: &[f64], q: &[f64]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    let z_sep = |p: &[f64], q: &[f64]| -> f64 {
        p[m..]
            .iter()
            .zip(&q[m..])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };

    // Bisection descent: each trial starts from a pair at a large
    // separation in the degenerate coordinates and repeatedly halves the
    // pair toward its steeper side, recording a (separation, gap) sample
    // at every level. A genuine discontinuity keeps its gap all the way
    // down; a continuous coefficient's gap decays with the separation.
    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(pair_budget);
    let mut rng = stream_rng(seed, 0x48_31_33);
    'trials: for trial in 0..pair_budget {
        if raw.len() >= pair_budget {
            break;
        }
        let mi = trial % bounds.len();
        let bound = &bounds[mi];
        let mut lo_pt = vec![0.0f64; d];
        for j in 0..d {
            lo_pt[j] = rng.random_range(k.lo[j]..=k.hi[j]);
        }
        let mut dir = vec![0.0f64; nz];
        let mut norm = 0.0;
        for v in dir.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
            norm += *v * *v;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        // Start in the upper octave of separations; the descent fills the
        // smaller scales.
        let s0 = max_sep / 8.0 * 8.0f64.powf(rng.random::<f64>());
        let mut hi_pt = lo_pt.clone();
        for (jz, v) in dir.iter().enumerate() {
            let j = m + jz;
            hi_pt[j] = (lo_pt[j] + s0 * v / norm).clamp(k.lo[j], k.hi[j]);
        }
        let mut vals_lo = match eval_all(bound, &lo_pt) {
            Ok(v) => v,
            Err(e) => {
                report.add_witness(&lo_pt, mi, e.to_string());
                continue;
            }
        };
        let mut vals_hi = match eval_all(bound, &hi_pt) {
            Ok(v) => v,
            Err(e) => {
                report.add_witness(&hi_pt, mi, e.to_string());
                continue;
            }
        };
        loop {
            let sep = z_sep(&lo_pt, &hi_pt);
            if sep <= min_sep {
                break;
            }
            raw.push((sep, max_diff(&vals_lo, &vals_hi)));
            let mid: Vec<f64> = lo_pt
                .iter()
                .zip(&hi_pt)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let vals_mid = match eval_all(bound, &mid) {
                Ok(v) => v,
                Err(e) => {
                    report.add_witness(&mid, mi, e.to_string());
                    continue 'trials;
                }
            };
            if max_diff(&vals_lo, &vals_mid) >= max_diff(&vals_mid, &vals_hi) {
                hi_pt = mid;
                vals_hi = vals_mid;
            } else {
                lo_pt = mid;
                vals_lo = vals_mid;
            }
        }
    }

    if raw.is_empty() {
        report.pass = false;
        report.note = Some("no usable sample pairs were generated".into());
        return Ok(report);
    }

    // Logarithmic binning and the monotone envelope of the per-bin maxima.
    let lo = min_sep.ln();
    let hi = max_sep.ln();
    let mut bin_max = vec![0.0f64; MODULUS_BINS];
    let mut bin_cnt = vec![0usize; MODULUS_BINS];
    for &(sep, gap) in &raw {
        let t = ((sep.ln() - lo) / (hi - lo) * MODULUS_BINS as f64)
            .floor()
            .clamp(0.0, MODULUS_BINS as f64 - 1.0) as usize;
        bin_max[t] = bin_max[t].max(gap);
        bin_cnt[t] += 1;
    }
    let centers: Vec<f64> = (0..MODULUS_BINS)
        .map(|t| (lo + (t as f64 + 0.5) / MODULUS_BINS as f64 * (hi - lo)).exp())
        .collect();
    let filled: Vec<usize> = (0..MODULUS_BINS).filter(|&t| bin_cnt[t] > 0).collect();
    let ys: Vec<f64> = filled.iter().map(|&t| bin_max[t]).collect();
    let ws: Vec<f64> = filled.iter().map(|&t| bin_cnt[t] as f64).collect();
    let env = isotonic_non_decreasing(&ys, &ws);
    report.modulus_samples = filled
        .iter()
        .zip(&env)
        .map(|(&t, &e)| (centers[t], e))
        .collect();

    // Vanishing-at-zero heuristic: the envelope at the smallest sampled
    // separation must be tiny relative to the envelope at the largest (or
    // absolutely tiny for flat coefficient fields).
    let env_first = env.first().copied().unwrap_or(0.0);
    let env_last = env.last().copied().unwrap_or(0.0);
    let continuous = env_first <= f64::max(1e-9, 0.05 * env_last);
    if !continuous {
        report.pass = false;
        report.note = Some(format!(
            "envelope does not vanish at small separations: gap {env_first:.3e} at separation \
             {:.3e} vs {env_last:.3e} at {:.3e} — jump suspected",
            report.modulus_samples.first().map(|p| p.0).unwrap_or(0.0),
            report.modulus_samples.last().map(|p| p.0).unwrap_or(0.0),
        ));
    } else {
        report.note = Some(format!(
            "{} sample pairs over {} measures; envelope spans [{env_first:.3e}, {env_last:.3e}]; \
             a sample, not a certificate",
            raw.len(),
            measures.len()
        ));
    }
    Ok(report)
}
