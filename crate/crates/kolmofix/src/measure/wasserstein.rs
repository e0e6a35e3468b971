//! Order-p transport distance between one-dimensional measures via the
//! quantile coupling (sorted merge walk over atom weights).

use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::util::sum::pairwise_sum;

const MASS_MATCH_TOL: f64 = 1e-9;

/// W_p between two measures on the line: sort the atoms of each side,
/// then transport matching quantile slabs against each other. Returns
/// `(∫ |F⁻¹ - G⁻¹|^p)^(1/p)` where the integral runs over the shared mass.
///
/// Both measures must be one-dimensional with (numerically) equal total
/// mass. Atom positions are compared through the monotone coupling, which
/// is optimal on the line for every convex cost.
pub fn wasserstein_1d(mu: &Measure, nu: &Measure, p: f64) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            op: "wasserstein_1d",
            dim: mu.dim().max(nu.dim()),
            detail: "transport distance is computed on 1-D marginals".into(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::config("transport order p must satisfy p >= 1"));
    }
    let (ma, mb) = (mu.mass(), nu.mass());
    if (ma - mb).abs() > MASS_MATCH_TOL * ma.max(mb).max(1.0) {
        return Err(Error::MassMismatch {
            left: ma,
            right: mb,
            diff: (ma - mb).abs(),
        });
    }
    if ma == 0.0 {
        return Ok(0.0);
    }

    let a = sorted_atoms(mu)?;
    let b = sorted_atoms(nu)?;

    // Merge walk: consume mass from both sides in lockstep.
    let mut terms: Vec<f64> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut rem_a = if a.is_empty() { 0.0 } else { a[0].1 };
    let mut rem_b = if b.is_empty() { 0.0 } else { b[0].1 };
    while i < a.len() && j < b.len() {
        let step = rem_a.min(rem_b);
        if step > 0.0 {
            terms.push(step * (a[i].0 - b[j].0).abs().powf(p));
        }
        rem_a -= step;
        rem_b -= step;
        // Advance whichever side is exhausted; advance both on exact ties so
        // zero-weight chunks can never stall the walk.
        if rem_a <= 0.0 {
            i += 1;
            if i < a.len() {
                rem_a = a[i].1;
            }
        }
        if rem_b <= 0.0 {
            j += 1;
            if j < b.len() {
                rem_b = b[j].1;
            }
        }
    }
    let total = pairwise_sum(&terms).max(0.0);
    Ok(total.powf(1.0 / p))
}

/// Atoms of a 1-D measure sorted by position, zero weights dropped.
fn sorted_atoms(mu: &Measure) -> Result<Vec<(f64, f64)>> {
    let atoms = mu.to_atoms()?;
    let mut out: Vec<(f64, f64)> = (0..atoms.n_atoms())
        .filter(|&k| atoms.weights()[k] > 0.0)
        .map(|k| (atoms.point(k)[0], atoms.weights()[k]))
        .collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}
