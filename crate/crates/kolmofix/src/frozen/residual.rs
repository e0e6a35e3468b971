//! Weak-form residuals: how well a measure annihilates the generator of
//! the frozen problem, `max_u |∫ (Σ a^{ij} ∂_i∂_j u + Σ b^i ∂_i u) dμ|`,
//! over a battery of compactly supported test functions. The default
//! battery is every product of Hermite polynomials of total degree at most
//! four, cut off by a C² radial plateau bump and normalized to unit sup.

use crate::coeff::field::CoefficientField;
use crate::error::{Error, Result};
use crate::func::{C2Fn, ScalarFn};
use crate::measure::Measure;
use crate::util::bump::PlateauBump;
use crate::util::cube::Cube;
use crate::util::hermite::hermite_d2;
use std::sync::Arc;

/// Maximum total degree of the polynomial part of the default battery.
pub const DEFAULT_MAX_DEGREE: usize = 4;

/// A product of per-coordinate Hermite polynomials, centered in a box,
/// multiplied by a radial C² plateau cutoff and scaled to roughly unit
/// sup-norm. Twice continuously differentiable with compact support.
pub struct HermiteBump {
    degrees: Vec<usize>,
    center: Vec<f64>,
    bump: PlateauBump,
    scale: f64,
}

impl HermiteBump {
    pub fn new(degrees: Vec<usize>, center: Vec<f64>, r_one: f64, r_zero: f64) -> Self {
        assert_eq!(degrees.len(), center.len());
        HermiteBump {
            degrees,
            center,
            bump: PlateauBump::new(r_one, r_zero),
            scale: 1.0,
        }
    }

    /// Divide the function by an estimate of its sup-norm on `domain`.
    pub fn normalized(mut self, domain: &Cube, cells_per_axis: usize) -> Self {
        let mut sup = 0.0f64;
        domain.for_each_midpoint(cells_per_axis, |x| {
            let v = self.value(x).abs();
            if v > sup {
                sup = v;
            }
        });
        if sup > 1e-12 {
            self.scale = sup;
        }
        self
    }

    /// Per-coordinate Hermite values and derivatives at the shifted point.
    fn parts(&self, x: &[f64]) -> (Vec<(f64, f64, f64)>, Vec<f64>, f64) {
        let d = self.degrees.len();
        let mut h = Vec::with_capacity(d);
        let mut y = Vec::with_capacity(d);
        let mut r2 = 0.0;
        for i in 0..d {
            let yi = x[i] - self.center[i];
            y.push(yi);
            r2 += yi * yi;
            h.push(hermite_d2(self.degrees[i], yi));
        }
        (h, y, r2.sqrt())
    }

    /// Product of Hermite values over all coordinates except the skipped
    /// ones (a factor index may appear once in each slot).
    fn prod_except(h: &[(f64, f64, f64)], skip_a: usize, skip_b: usize) -> f64 {
        let mut p = 1.0;
        for (k, hk) in h.iter().enumerate() {
            if k != skip_a && k != skip_b {
                p *= hk.0;
            }
        }
        p
    }
}

impl ScalarFn for HermiteBump {
    fn dim(&self) -> usize {
        self.degrees.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (h, _, r) = self.parts(x);
        let chi = self.bump.value(r);
        if chi == 0.0 {
            return 0.0;
        }
        let poly: f64 = h.iter().map(|p| p.0).product();
        poly * chi / self.scale
    }
}

impl C2Fn for HermiteBump {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let (h, y, r) = self.parts(x);
        let (chi, chi1, _) = self.bump.eval(r);
        if chi == 0.0 && chi1 == 0.0 {
            out[..d].fill(0.0);
            return;
        }
        let poly: f64 = h.iter().map(|p| p.0).product();
        for i in 0..d {
            let pi = h[i].1 * Self::prod_except(&h, i, i);
            let mut g = pi * chi;
            if chi1 != 0.0 && r > 0.0 {
                g += poly * chi1 * y[i] / r;
            }
            out[i] = g / self.scale;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let (h, y, r) = self.parts(x);
        let (chi, chi1, chi2) = self.bump.eval(r);
        if chi == 0.0 && chi1 == 0.0 && chi2 == 0.0 {
            out[..d * d].fill(0.0);
            return;
        }
        let poly: f64 = h.iter().map(|p| p.0).product();
        let radial = chi1 != 0.0 || chi2 != 0.0;
        for i in 0..d {
            for j in i..d {
                let pij = if i == j {
                    h[i].2 * Self::prod_except(&h, i, i)
                } else {
                    h[i].1 * h[j].1 * Self::prod_except(&h, i, j)
                };
                let mut v = pij * chi;
                if radial && r > 0.0 {
                    let pi = h[i].1 * Self::prod_except(&h, i, i);
                    let pj = h[j].1 * Self::prod_except(&h, j, j);
                    v += (pi * y[j] + pj * y[i]) * chi1 / r;
                    let delta = if i == j { 1.0 } else { 0.0 };
                    v += poly
                        * (chi2 * y[i] * y[j] / (r * r)
                            + chi1 * (delta - y[i] * y[j] / (r * r)) / r);
                }
                let v = v / self.scale;
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
    }
}

/// Every Hermite-product × plateau-bump test function of total degree up
/// to four, supported strictly inside `domain` and normalized to roughly
/// unit sup-norm.
pub fn default_battery(dim: usize, domain: &Cube) -> Vec<Arc<dyn C2Fn>> {
    let center: Vec<f64> = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(l, h)| 0.5 * (l + h))
        .collect();
    let half = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(l, h)| 0.5 * (h - l))
        .fold(f64::INFINITY, f64::min);
    let r_zero = 0.98 * half;
    let r_one = 0.6 * r_zero;
    let cells = match dim {
        1 => 513,
        2 => 65,
        _ => 17,
    };
    let mut battery: Vec<Arc<dyn C2Fn>> = Vec::new();
    let mut degrees = vec![0usize; dim];
    loop {
        if degrees.iter().sum::<usize>() <= DEFAULT_MAX_DEGREE {
            let u = HermiteBump::new(degrees.clone(), center.clone(), r_one, r_zero)
                .normalized(domain, cells);
            battery.push(Arc::new(u));
        }
        // Odometer over degrees 0..=DEFAULT_MAX_DEGREE per coordinate.
        let mut k = dim;
        loop {
            if k == 0 {
                return battery;
            }
            k -= 1;
            if degrees[k] < DEFAULT_MAX_DEGREE {
                degrees[k] += 1;
                break;
            }
            degrees[k] = 0;
        }
    }
}

/// `max_u |∫ L u dμ|` over the battery, with the measure argument of the
/// coefficients frozen at `sigma`.
pub fn weak_residual(
    mu: &Measure,
    field: &CoefficientField,
    sigma: &Measure,
    battery: &[Arc<dyn C2Fn>],
) -> Result<f64> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery {
            op: "weak_residual".into(),
        });
    }
    let d = field.dim();
    if mu.dim() != d {
        return Err(Error::config(format!(
            "measure dimension {} does not match field dimension {d}",
            mu.dim()
        )));
    }
    let bound = field.bind(sigma)?;
    let mut worst = 0.0f64;
    let mut amat = vec![0.0f64; d * d];
    let mut bvec = vec![0.0f64; d];
    let mut grad = vec![0.0f64; d];
    let mut hess = vec![0.0f64; d * d];
    for u in battery {
        if u.dim() != d {
            return Err(Error::config(format!(
                "test function has dimension {} but the field has dimension {d}",
                u.dim()
            )));
        }
        let mut first_err: Option<Error> = None;
        let total = mu.integrate(|x| {
            if first_err.is_some() {
                return 0.0;
            }
            if let Err(e) = bound.a_matrix(x, &mut amat) {
                first_err = Some(e);
                return 0.0;
            }
            if let Err(e) = bound.b_vector(x, &mut bvec) {
                first_err = Some(e);
                return 0.0;
            }
            u.hessian(x, &mut hess);
            u.gradient(x, &mut grad);
            let mut lu = 0.0;
            for i in 0..d {
                for j in 0..d {
                    lu += amat[i * d + j] * hess[i * d + j];
                }
                lu += bvec[i] * grad[i];
            }
            lu
        });
        if let Some(e) = first_err {
            return Err(e);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite {
                what: "weak residual".into(),
                point: vec![],
            });
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}
