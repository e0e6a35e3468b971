//! Action of the second-order operator attached to a coefficient field:
//! `L f(x) = Σ a^{ij}(x) ∂_i∂_j f(x) + Σ b^i(x) ∂_i f(x)`.

use crate::coeff::field::{BoundField, CoefficientField};
use crate::error::{Error, Result};
use crate::func::C2Fn;
use crate::measure::Measure;

/// Evaluate `L_μ f` at `x`: the coefficients are frozen at `mu` and
/// contracted exactly with the gradient and Hessian of `f`.
///
/// Terms whose derivative entry is exactly zero are skipped without
/// evaluating the coefficient, so a constant `f` yields `0` for any field.
pub fn apply_generator(
    field: &CoefficientField,
    mu: &Measure,
    f: &dyn C2Fn,
    x: &[f64],
) -> Result<f64> {
    let d = field.dim();
    if f.dim() != d {
        return Err(Error::config(format!(
            "function dimension {} does not match field dimension {d}",
            f.dim()
        )));
    }
    if x.len() != d {
        return Err(Error::config(format!(
            "point has {} coordinates but the field has dimension {d}",
            x.len()
        )));
    }
    let bound = field.bind(mu)?;
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    generator_value(&bound, f, x, &mut grad, &mut hess)
}

/// Allocation-free core of [`apply_generator`] for callers that bind the
/// field once and sweep many points. `grad`/`hess` are scratch buffers of
/// lengths `d` and `d*d`.
pub(crate) fn generator_value(
    bound: &BoundField,
    f: &dyn C2Fn,
    x: &[f64],
    grad: &mut [f64],
    hess: &mut [f64],
) -> Result<f64> {
    let d = bound.dim();
    f.gradient(x, grad);
    f.hessian(x, hess);
    let mut total = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let h = hess[i * d + j];
            if h != 0.0 {
                total += bound.eval_a(i, j, x)? * h;
            }
        }
        let g = grad[i];
        if g != 0.0 {
            total += bound.eval_b(i, x)? * g;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            what: "generator value".into(),
            point: x.to_vec(),
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::field::CoefficientField;
    use crate::coeff::parse::parse_coeff;
    use crate::func::{ClosureC2, HalfSquare, ScalarFn};
    use crate::lyapunov::exprfn::ExprFn;
    use crate::measure::discrete::DiscreteMeasure;

    fn entry(text: &str) -> crate::coeff::field::CoeffEntry {
        parse_coeff(text).unwrap().into()
    }

    fn cloud(points: Vec<f64>, weights: Vec<f64>) -> Measure {
        Measure::Discrete(DiscreteMeasure::probability(1, points, weights).unwrap())
    }

    fn cubic_field() -> CoefficientField {
        CoefficientField::scalar(
            entry("x1^2 * MOM(1,abs)^3"),
            entry("-2 * x1^3 * MOM(1,abs)"),
            1,
        )
        .unwrap()
    }

    #[test]
    fn constant_functions_are_annihilated() {
        let f = ClosureC2::new(1, |_| 7.5, |_, g| g.fill(0.0), |_, h| h.fill(0.0));
        // Even a field that would fault at this point: the drift divides by x.
        let field = CoefficientField::scalar(entry("1"), entry("1 / x1"), 1).unwrap();
        let mu = cloud(vec![0.0], vec![1.0]);
        assert_eq!(apply_generator(&field, &mu, &f, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn interaction_field_on_the_quadratic_gauge() {
        // a = x²J³, b = -2x³J with J = ∫|y|dμ, f = x²/2:
        // L f = x²J³ - 2x⁴J.
        let field = cubic_field();
        let f = HalfSquare::new(1);
        let unit = cloud(vec![-1.0, 1.0], vec![0.5, 0.5]); // J = 1
        for &x in &[0.0f64, 0.5, -1.25, 2.0] {
            let expect = x * x - 2.0 * x.powi(4);
            let got = apply_generator(&field, &unit, &f, &[x]).unwrap();
            assert!((got - expect).abs() < 1e-12, "x={x}: {got} vs {expect}");
        }
        let half = cloud(vec![-0.5, 0.5], vec![0.5, 0.5]); // J = 1/2
        let x = 1.5f64;
        let expect = x * x * 0.125 - 2.0 * x.powi(4) * 0.5;
        let got = apply_generator(&field, &half, &f, &[x]).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn driftless_diffusion_free_value_at_the_support_edge() {
        // a vanishes at x = 1 and b = ∫2y dμ - x, so with the gauge frozen
        // at δ₁ the value at x = 1 is b·(x-2) = 1·(-1) = -1.
        let field = CoefficientField::scalar(
            entry("MAX(0, 1 - ABS(x1))"),
            entry("INT(2*y1) - x1"),
            1,
        )
        .unwrap();
        let d1 = cloud(vec![1.0], vec![1.0]);
        let w = ExprFn::parse("0.5*x1^2 - 2*x1*INT(y1) + 2*INT(y1^2)", 1).unwrap();
        let bound_w = w.bind(&d1).unwrap();
        let got = apply_generator(&field, &d1, &bound_w, &[1.0]).unwrap();
        assert!((got + 1.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn generator_is_linear_in_the_function() {
        let field = CoefficientField::new(
            2,
            2,
            vec![entry("1 + x1^2"), entry("0.25"), entry("0.25"), entry("2")],
            vec![entry("-x1 + MOM(1,abs)"), entry("-0.5*x2")],
        )
        .unwrap();
        let mu = Measure::Discrete(
            DiscreteMeasure::probability(2, vec![0.5, -0.25, -1.0, 2.0], vec![0.3, 0.7]).unwrap(),
        );
        let f1 = ExprFn::parse("0.5*(x1^2 + x2^2)", 2).unwrap().bind_free().unwrap();
        let f2 = ExprFn::parse("x1^3 - x1*x2 + 2", 2).unwrap().bind_free().unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let combo = ClosureC2::new(
            2,
            |x: &[f64]| alpha * f1.value(x) + beta * f2.value(x),
            |x: &[f64], g: &mut [f64]| {
                let mut t = [0.0; 2];
                f1.gradient(x, g);
                f2.gradient(x, &mut t);
                for i in 0..2 {
                    g[i] = alpha * g[i] + beta * t[i];
                }
            },
            |x: &[f64], h: &mut [f64]| {
                let mut t = [0.0; 4];
                f1.hessian(x, h);
                f2.hessian(x, &mut t);
                for i in 0..4 {
                    h[i] = alpha * h[i] + beta * t[i];
                }
            },
        );
        for &p in &[[0.3, -0.8], [1.1, 0.4], [-2.0, 1.5]] {
            let lhs = apply_generator(&field, &mu, &combo, &p).unwrap();
            let l1 = apply_generator(&field, &mu, &f1, &p).unwrap();
            let l2 = apply_generator(&field, &mu, &f2, &p).unwrap();
            assert!(
                (lhs - (alpha * l1 + beta * l2)).abs() < 1e-12,
                "at {p:?}: {lhs} vs {}",
                alpha * l1 + beta * l2
            );
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let field = cubic_field();
        let f = HalfSquare::new(2);
        let mu = cloud(vec![0.0], vec![1.0]);
        assert!(apply_generator(&field, &mu, &f, &[0.0]).is_err());
        let f1 = HalfSquare::new(1);
        assert!(apply_generator(&field, &mu, &f1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn missing_derivatives_surface_as_an_error() {
        let field = CoefficientField::scalar(entry("1"), entry("-x1"), 1).unwrap();
        let mu = cloud(vec![0.0], vec![1.0]);
        let f = ExprFn::parse("x1 ^ x1", 1).unwrap();
        let b = f.bind(&mu).unwrap();
        assert!(apply_generator(&field, &mu, &b, &[1.5]).is_err());
    }
}
