//! Smoothing of coefficient fields in the non-degenerate directions by
//! convolution with a compactly supported kernel, evaluated by midpoint
//! quadrature. Smoothing acts on the leading `m` coordinates only; the
//! degenerate coordinates and the measure argument pass through untouched.

use crate::coeff::field::{CoeffEntry, CoefficientField, NativeEntry};
use crate::error::{Error, Result};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::Measure;
use std::sync::Arc;

/// Minimum quadrature nodes per smoothed coordinate.
pub const MIN_NODES: usize = 64;

/// Kernel profile shape. All profiles are even, nonnegative, compactly
/// supported, and integrate to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Indicator of `[-1/2, 1/2]`.
    Box,
    /// `1 - |u|` on `[-1, 1]`.
    Triangular,
    /// `(15/16)(1 - u^2)^2` on `[-1, 1]`.
    Quartic,
}

impl KernelKind {
    /// Half-width of the support of the unit-scale profile.
    pub fn half_width(self) -> f64 {
        match self {
            KernelKind::Box => 0.5,
            KernelKind::Triangular | KernelKind::Quartic => 1.0,
        }
    }

    /// Profile value at `u` (unit scale).
    pub fn profile(self, u: f64) -> f64 {
        match self {
            KernelKind::Box => {
                if u.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Triangular => (1.0 - u.abs()).max(0.0),
            KernelKind::Quartic => {
                if u.abs() <= 1.0 {
                    let t = 1.0 - u * u;
                    (15.0 / 16.0) * t * t
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "box" => Ok(KernelKind::Box),
            "triangular" | "triangle" => Ok(KernelKind::Triangular),
            "quartic" | "biweight" => Ok(KernelKind::Quartic),
            other => Err(Error::config(format!(
                "unknown kernel `{other}` (expected box, triangular, or quartic)"
            ))),
        }
    }
}

/// A smoothing kernel at scale `delta` acting on the leading `m`
/// coordinates. For `m >= 2` the product kernel is rescaled per axis by
/// `1/sqrt(m)` so its support fits inside the ball of the profile's
/// half-width.
#[derive(Clone, Copy, Debug)]
pub struct MollifierKernel {
    pub kind: KernelKind,
    pub delta: f64,
    pub m: usize,
}

impl MollifierKernel {
    pub fn new(kind: KernelKind, delta: f64, m: usize) -> Result<Self> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::config(format!(
                "smoothing scale must be positive and finite, got {delta}"
            )));
        }
        Ok(Self { kind, delta, m })
    }

    /// Largest coordinate offset (before the `delta` scaling) that any
    /// quadrature node can reach.
    pub fn support_radius(&self) -> f64 {
        if self.m <= 1 {
            self.kind.half_width()
        } else {
            self.kind.half_width() / (self.m as f64).sqrt()
        }
    }

    /// Midpoint quadrature of the product kernel: offsets in the smoothed
    /// coordinates (each of length `m`) and weights normalized so they sum
    /// to one exactly, which makes constant coefficients smooth to
    /// themselves.
    pub fn quadrature(&self, nodes_per_dim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.m == 0 {
            return Err(Error::config("kernel with m = 0 has no quadrature"));
        }
        let n = nodes_per_dim.max(MIN_NODES);
        let hw = self.kind.half_width();
        let scale = if self.m >= 2 {
            (self.m as f64).sqrt()
        } else {
            1.0
        };
        // Per-axis midpoints of n cells over [-hw, hw] and their profile
        // values; the stored offset is rescaled to fit the support ball.
        let mut axis_t = Vec::with_capacity(n);
        let mut axis_w = Vec::with_capacity(n);
        for q in 0..n {
            let t = -hw + (q as f64 + 0.5) / n as f64 * 2.0 * hw;
            let w = self.kind.profile(t);
            if w > 0.0 {
                axis_t.push(t / scale);
                axis_w.push(w);
            }
        }
        if axis_t.is_empty() {
            return Err(Error::config("kernel quadrature produced no nodes"));
        }
        // Odometer over the m axes.
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let k = axis_t.len();
        let mut idx = vec![0usize; self.m];
        loop {
            let mut off = Vec::with_capacity(self.m);
            let mut w = 1.0f64;
            for &q in &idx {
                off.push(axis_t[q]);
                w *= axis_w[q];
            }
            offsets.push(off);
            weights.push(w);
            let mut carry = self.m;
            while carry > 0 {
                idx[carry - 1] += 1;
                if idx[carry - 1] < k {
                    break;
                }
                idx[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
        // Normalize, absorbing the rounding defect so the sequential sum of
        // the weights is as close to one as floating point allows.
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::config("kernel weights do not normalize"));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        for _ in 0..4 {
            let s: f64 = weights.iter().sum();
            if s == 1.0 {
                break;
            }
            weights[0] += 1.0 - s;
        }
        Ok((offsets, weights))
    }
}

/// Result of smoothing a coefficient field.
#[derive(Clone, Debug)]
pub struct Mollified {
    pub field: CoefficientField,
    /// Set when the operation was a no-op or otherwise degenerate.
    pub warning: Option<String>,
}

/// Smooth every entry of `field` in its leading `m` coordinates by
/// convolving with `kernel` at scale `kernel.delta`. Entries that do not
/// depend on the measure are compiled once up front; measure-dependent
/// entries are compiled per distinct measure when evaluated, so smoothed
/// fields are best suited to checks and small grids rather than long
/// particle runs.
pub fn mollify(
    field: &CoefficientField,
    kernel: &MollifierKernel,
    nodes_per_dim: usize,
) -> Result<Mollified> {
    let d = field.dim();
    let m = field.split_m();
    if kernel.m != m {
        return Err(Error::config(format!(
            "kernel smooths {} coordinates but the field's non-degenerate block has size {m}",
            kernel.m
        )));
    }
    if m == 0 {
        return Ok(Mollified {
            field: field.clone(),
            warning: Some(
                "no non-degenerate coordinates to smooth (m = 0); field returned unchanged"
                    .into(),
            ),
        });
    }
    let (offsets, weights) = kernel.quadrature(nodes_per_dim)?;
    let offsets = Arc::new(offsets);
    let weights = Arc::new(weights);
    let delta = kernel.delta;
    // Dummy measure for compiling measure-independent entries up front.
    let dummy = Measure::Discrete(DiscreteMeasure::dirac(&vec![0.0; d])?);

    let smoothed = field.map_entries(|entry, _is_a, _i, _j| {
        let src = entry.clone();
        let label = format!("smooth[{:?}, {delta}]({})", kernel.kind, entry.describe());
        let prebound = if entry.depends_on_measure() {
            None
        } else {
            Some(Arc::new(src.bind(&dummy, d)?))
        };
        let offsets = offsets.clone();
        let weights = weights.clone();
        let f = move |x: &[f64], mu: &Measure| -> Result<f64> {
            let fresh;
            let bound = match &prebound {
                Some(b) => b.as_ref(),
                None => {
                    fresh = src.bind(mu, d)?;
                    &fresh
                }
            };
            let mut shifted = x.to_vec();
            let mut acc = 0.0f64;
            for (off, w) in offsets.iter().zip(weights.iter()) {
                for (i, o) in off.iter().enumerate() {
                    shifted[i] = x[i] - delta * o;
                }
                acc += w * bound.eval(&shifted)?;
            }
            Ok(acc)
        };
        Ok(CoeffEntry::Native(NativeEntry {
            label,
            f: Arc::new(f),
        }))
    })?;
    Ok(Mollified {
        field: smoothed,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::checks::{check_h11, check_h12};
    use crate::coeff::parse::parse_coeff;
    use crate::util::cube::Cube;

    fn entry(text: &str) -> CoeffEntry {
        parse_coeff(text).unwrap().into()
    }

    fn dirac0(d: usize) -> Measure {
        Measure::Discrete(DiscreteMeasure::dirac(&vec![0.0; d]).unwrap())
    }

    fn scalar_field(a: &str, b: &str, m: usize) -> CoefficientField {
        CoefficientField::scalar(entry(a), entry(b), m).unwrap()
    }

    #[test]
    fn box_kernel_heaviside_value_and_l1_gap() {
        let field = scalar_field("IND(x1 >= 0)", "0", 1);
        let delta = 0.2;
        let kernel = MollifierKernel::new(KernelKind::Box, delta, 1).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        assert!(smooth.warning.is_none());
        let bound = smooth.field.bind(&dirac0(1)).unwrap();
        let raw = field.bind(&dirac0(1)).unwrap();
        // The step smooths to exactly one half at the jump.
        let at0 = bound.eval_a(0, 0, &[0.0]).unwrap();
        assert!((at0 - 0.5).abs() < 1e-15, "value at the jump: {at0}");
        // L1 gap between the step and its smoothing is delta/4.
        let cells = 8000usize;
        let mut gap = 0.0f64;
        for c in 0..cells {
            let x = -1.0 + (c as f64 + 0.5) / cells as f64 * 2.0;
            let diff =
                (bound.eval_a(0, 0, &[x]).unwrap() - raw.eval_a(0, 0, &[x]).unwrap()).abs();
            gap += diff * (2.0 / cells as f64);
        }
        let expected = delta / 4.0;
        assert!(
            (gap - expected).abs() <= 0.05 * expected,
            "L1 gap {gap} vs expected {expected}"
        );
    }

    #[test]
    fn constants_smooth_to_themselves() {
        for kind in [KernelKind::Box, KernelKind::Triangular, KernelKind::Quartic] {
            let field = scalar_field("1", "3.7", 1);
            let kernel = MollifierKernel::new(kind, 0.3, 1).unwrap();
            let smooth = mollify(&field, &kernel, 64).unwrap();
            let bound = smooth.field.bind(&dirac0(1)).unwrap();
            let one = bound.eval_a(0, 0, &[0.4]).unwrap();
            assert_eq!(one, 1.0, "{kind:?}");
            let c = bound.eval_b(0, &[-0.2]).unwrap();
            assert!((c - 3.7).abs() <= 1e-14 * 3.7, "{kind:?}: {c}");
        }
    }

    #[test]
    fn product_kernel_constant_identity() {
        let field = CoefficientField::new(
            2,
            2,
            vec![entry("2.5"), entry("0"), entry("0"), entry("2.5")],
            vec![entry("0"), entry("0")],
        )
        .unwrap();
        let kernel = MollifierKernel::new(KernelKind::Quartic, 0.5, 2).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        let bound = smooth.field.bind(&dirac0(2)).unwrap();
        let v = bound.eval_a(0, 0, &[0.3, -0.7]).unwrap();
        assert!((v - 2.5).abs() <= 1e-13, "{v}");
        // The rescaled product support stays inside the profile ball.
        assert!(kernel.support_radius() <= kernel.kind.half_width() + 1e-15);
    }

    #[test]
    fn even_kernels_reproduce_linear_coefficients() {
        let field = scalar_field("2 + x1", "0", 1);
        let kernel = MollifierKernel::new(KernelKind::Triangular, 0.3, 1).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        let bound = smooth.field.bind(&dirac0(1)).unwrap();
        let v = bound.eval_a(0, 0, &[0.4]).unwrap();
        assert!((v - 2.4).abs() < 1e-12, "{v}");
    }

    #[test]
    fn split_zero_is_identity_with_warning() {
        let field = scalar_field("x1 * IND(x1 >= 0)", "-x1", 0);
        let kernel = MollifierKernel::new(KernelKind::Box, 0.25, 0).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        assert!(smooth.warning.as_deref().unwrap().contains("unchanged"));
        let b1 = field.bind(&dirac0(1)).unwrap();
        let b2 = smooth.field.bind(&dirac0(1)).unwrap();
        for x in [-0.7, 0.0, 0.3, 1.4] {
            assert_eq!(
                b1.eval_a(0, 0, &[x]).unwrap(),
                b2.eval_a(0, 0, &[x]).unwrap()
            );
        }
    }

    #[test]
    fn block_lower_bound_survives_on_shrunk_cube() {
        let field = scalar_field("2 + x1^2", "0", 1);
        let delta = 0.1;
        let kernel = MollifierKernel::new(KernelKind::Box, delta, 1).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        let k = Cube::symmetric(1.0, 1).unwrap();
        let margin = delta * kernel.support_radius();
        let raw_rep = check_h11(&field, &k, &[dirac0(1)], 40).unwrap();
        let inner = k.shrunk(margin).unwrap();
        let smooth_rep = check_h11(&smooth.field, &inner, &[dirac0(1)], 40).unwrap();
        assert!(smooth_rep.pass);
        // Averaging values that all sit above the raw lower bound cannot
        // produce anything below it.
        assert!(
            smooth_rep.lambda_est.unwrap() >= raw_rep.lambda_est.unwrap() - 1e-12,
            "smoothed {:?} vs raw {:?}",
            smooth_rep.lambda_est,
            raw_rep.lambda_est
        );
    }

    #[test]
    fn sup_bound_is_dominated_by_enlarged_cube_sup() {
        let field = scalar_field("2 + x1^2", "-x1^3", 1);
        let delta = 0.2;
        let kernel = MollifierKernel::new(KernelKind::Triangular, delta, 1).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        let k = Cube::symmetric(1.0, 1).unwrap();
        let outer = k.enlarged(delta * kernel.support_radius()).unwrap();
        let smooth_rep = check_h12(&smooth.field, &k, &[dirac0(1)], 60).unwrap();
        let raw_rep = check_h12(&field, &outer, &[dirac0(1)], 200).unwrap();
        assert!(
            smooth_rep.sup_bound_est.unwrap() <= raw_rep.sup_bound_est.unwrap() + 1e-12,
            "smoothed sup {:?} exceeds raw sup {:?}",
            smooth_rep.sup_bound_est,
            raw_rep.sup_bound_est
        );
    }

    #[test]
    fn measure_dependence_passes_through() {
        let field = scalar_field("MOM(1,abs)^3 * x1^2", "0", 1);
        let kernel = MollifierKernel::new(KernelKind::Box, 0.05, 1).unwrap();
        let smooth = mollify(&field, &kernel, 64).unwrap();
        let mu1 = Measure::Discrete(
            DiscreteMeasure::probability(1, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        );
        let mu2 = Measure::Discrete(
            DiscreteMeasure::probability(1, vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap(),
        );
        let v1 = smooth.field.bind(&mu1).unwrap().eval_a(0, 0, &[1.0]).unwrap();
        let v2 = smooth.field.bind(&mu2).unwrap().eval_a(0, 0, &[1.0]).unwrap();
        assert!((v2 / v1 - 8.0).abs() < 1e-9, "ratio {}", v2 / v1);
    }

    #[test]
    fn invalid_kernels_are_rejected() {
        assert!(MollifierKernel::new(KernelKind::Box, 0.0, 1).is_err());
        assert!(MollifierKernel::new(KernelKind::Box, f64::NAN, 1).is_err());
        let field = scalar_field("1", "0", 1);
        let wrong_m = MollifierKernel::new(KernelKind::Box, 0.1, 2).unwrap();
        assert!(mollify(&field, &wrong_m, 64).is_err());
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!("box".parse::<KernelKind>().unwrap(), KernelKind::Box);
        assert_eq!(
            "Triangular".parse::<KernelKind>().unwrap(),
            KernelKind::Triangular
        );
        assert_eq!(
            "quartic".parse::<KernelKind>().unwrap(),
            KernelKind::Quartic
        );
        assert!("gauss".parse::<KernelKind>().is_err());
    }
}
