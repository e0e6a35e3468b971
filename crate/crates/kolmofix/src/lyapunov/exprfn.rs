//! Expression-backed scalar functions with exact symbolic derivatives.
//!
//! Drift-condition gauges are written in the coefficient expression
//! language, so they may depend on the measure argument through `MOM`/`INT`
//! functionals. Construction differentiates the expression twice; binding
//! against a measure freezes the functionals and compiles value, gradient,
//! and Hessian into fast pointwise forms.

use crate::coeff::ast::CoeffExpr;
use crate::coeff::bind::{bind_expr, BoundCoeff};
use crate::coeff::parse::parse_coeff;
use crate::error::{Error, Result};
use crate::func::{C2Fn, ScalarFn};
use crate::measure::discrete::DiscreteMeasure;
use crate::measure::Measure;

/// A scalar function of `(x, μ)` given by an expression, carrying its
/// symbolic gradient and Hessian. When the expression cannot be
/// differentiated (a power with non-constant exponent), the function still
/// evaluates but has no derivatives; operations that need them report the
/// stored reason.
#[derive(Clone, Debug)]
pub struct ExprFn {
    dim: usize,
    expr: CoeffExpr,
    grad: Option<Vec<CoeffExpr>>,
    /// Row-major `dim x dim`, symmetric by construction.
    hess: Option<Vec<CoeffExpr>>,
    diff_err: Option<String>,
}

impl ExprFn {
    pub fn new(expr: CoeffExpr, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("function dimension must be positive"));
        }
        expr.validate()?;
        if expr.min_dim() > dim {
            return Err(Error::config(format!(
                "expression `{expr}` references x{} but the dimension is {dim}",
                expr.min_dim()
            )));
        }
        let mut grad = Vec::with_capacity(dim);
        let mut hess = vec![CoeffExpr::Const(0.0); dim * dim];
        let mut diff_err = None;
        'diff: {
            for i in 0..dim {
                match expr.diff_x(i) {
                    Ok(g) => grad.push(g),
                    Err(e) => {
                        diff_err = Some(e.to_string());
                        break 'diff;
                    }
                }
            }
            for i in 0..dim {
                for j in i..dim {
                    match grad[i].diff_x(j) {
                        Ok(h) => {
                            hess[i * dim + j] = h.clone();
                            hess[j * dim + i] = h;
                        }
                        Err(e) => {
                            diff_err = Some(e.to_string());
                            break 'diff;
                        }
                    }
                }
            }
        }
        let (grad, hess) = if diff_err.is_none() {
            (Some(grad), Some(hess))
        } else {
            (None, None)
        };
        Ok(ExprFn {
            dim,
            expr,
            grad,
            hess,
            diff_err,
        })
    }

    /// Parse `text` and construct the function in dimension `dim`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        ExprFn::new(parse_coeff(text)?, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The printed expression (re-parses to the identical tree).
    pub fn describe(&self) -> String {
        self.expr.to_string()
    }

    pub fn expr(&self) -> &CoeffExpr {
        &self.expr
    }

    /// True if the value depends on the measure argument.
    pub fn depends_on_measure(&self) -> bool {
        self.expr.depends_on_measure()
    }

    /// Ok when exact first and second derivatives are available.
    pub fn require_derivatives(&self) -> Result<()> {
        match &self.diff_err {
            None => Ok(()),
            Some(reason) => Err(Error::config(format!(
                "`{}` has no x-derivatives: {reason}",
                self.expr
            ))),
        }
    }

    /// Freeze the measure argument, compiling value and derivatives.
    pub fn bind(&self, mu: &Measure) -> Result<BoundExprFn> {
        let value = bind_expr(&self.expr, mu, self.dim)?;
        let grad = match &self.grad {
            Some(gs) => Some(
                gs.iter()
                    .map(|g| bind_expr(g, mu, self.dim))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let hess = match &self.hess {
            Some(hs) => Some(
                hs.iter()
                    .map(|h| bind_expr(h, mu, self.dim))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(BoundExprFn {
            dim: self.dim,
            value,
            grad,
            hess,
        })
    }

    /// Bind a measure-independent function without supplying a measure.
    pub fn bind_free(&self) -> Result<BoundExprFn> {
        if self.depends_on_measure() {
            return Err(Error::config(format!(
                "`{}` depends on the measure; bind it against one",
                self.expr
            )));
        }
        let dummy = Measure::Discrete(DiscreteMeasure::dirac(&vec![0.0; self.dim])?);
        self.bind(&dummy)
    }
}

/// An [`ExprFn`] with its measure argument frozen. Implements the scalar
/// function traits; evaluation faults (division by zero, overflow) surface
/// as NaN, which downstream finiteness checks reject with the point.
pub struct BoundExprFn {
    dim: usize,
    value: BoundCoeff,
    grad: Option<Vec<BoundCoeff>>,
    hess: Option<Vec<BoundCoeff>>,
}

impl ScalarFn for BoundExprFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.value.eval(x).unwrap_or(f64::NAN)
    }
}

impl C2Fn for BoundExprFn {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.grad {
            Some(gs) => {
                for (o, g) in out.iter_mut().zip(gs) {
                    *o = g.eval(x).unwrap_or(f64::NAN);
                }
            }
            None => out.fill(f64::NAN),
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match &self.hess {
            Some(hs) => {
                for (o, h) in out.iter_mut().zip(hs) {
                    *o = h.eval(x).unwrap_or(f64::NAN);
                }
            }
            None => out.fill(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> Measure {
        Measure::Discrete(
            DiscreteMeasure::probability(1, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn quadratic_gauge_derivatives_are_exact() {
        let f = ExprFn::parse("0.5 * x1^2", 1).unwrap();
        assert!(!f.depends_on_measure());
        let b = f.bind_free().unwrap();
        let x = [1.75];
        assert_eq!(b.value(&x), 0.5 * 1.75 * 1.75);
        let mut g = [0.0];
        b.gradient(&x, &mut g);
        assert_eq!(g[0], 1.75);
        let mut h = [0.0];
        b.hessian(&x, &mut h);
        assert_eq!(h[0], 1.0);
    }

    #[test]
    fn measure_dependent_gauge_binds_per_measure() {
        // 0.5 ∫(x-2y)² dμ expanded in the expression language.
        let f = ExprFn::parse("0.5*x1^2 - 2*x1*INT(y1) + 2*INT(y1^2)", 1).unwrap();
        assert!(f.depends_on_measure());
        let at_dirac1 =
            f.bind(&Measure::Discrete(DiscreteMeasure::dirac(&[1.0]).unwrap()))
                .unwrap();
        // 0.5 (x-2)²: value at 1 is 0.5, gradient x-2 = -1, hessian 1.
        assert!((at_dirac1.value(&[1.0]) - 0.5).abs() < 1e-15);
        let mut g = [0.0];
        at_dirac1.gradient(&[1.0], &mut g);
        assert!((g[0] + 1.0).abs() < 1e-15);
        let mut h = [0.0];
        at_dirac1.hessian(&[1.0], &mut h);
        assert!((h[0] - 1.0).abs() < 1e-15);
        // Symmetric measure: centered quadratic 0.5x² + 2.
        let sym = f.bind(&two_point()).unwrap();
        assert!((sym.value(&[0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cross_derivatives_are_symmetric() {
        let f = ExprFn::parse("x1^2 * x2 + 3 * x1 * x2^2", 2).unwrap();
        let b = f.bind_free().unwrap();
        let x = [0.7, -1.3];
        let mut h = [0.0; 4];
        b.hessian(&x, &mut h);
        assert_eq!(h[1], h[2]);
        // ∂₁∂₂ = 2x₁ + 6x₂.
        assert!((h[1] - (2.0 * 0.7 + 6.0 * -1.3)).abs() < 1e-12);
    }

    #[test]
    fn non_differentiable_power_reports_a_reason() {
        let f = ExprFn::parse("x1 ^ x1", 1).unwrap();
        let err = f.require_derivatives().unwrap_err();
        assert!(err.to_string().contains("no x-derivatives"), "{err}");
        // Values still evaluate; derivatives come back NaN.
        let b = f.bind_free().unwrap();
        assert!((b.value(&[2.0]) - 4.0).abs() < 1e-15);
        let mut g = [0.0];
        b.gradient(&[2.0], &mut g);
        assert!(g[0].is_nan());
    }

    #[test]
    fn binding_a_measure_dependent_function_without_a_measure_fails() {
        let f = ExprFn::parse("MOM(2, radial) * x1", 1).unwrap();
        assert!(f.bind_free().is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(ExprFn::parse("x2", 1).is_err());
        assert!(ExprFn::parse("x1", 0).is_err());
    }
}
