//! Expression trees for measure-dependent coefficients.
//!
//! An expression may reference state coordinates `x1..xd`, integration
//! variables `y1..yd` (only inside `INT(...)` bodies), arithmetic, `ABS`,
//! `MIN`/`MAX`, threshold indicators `IND(e >= c)` / `IND(e <= c)`, moment
//! functionals `MOM(p, kind)`, and generic integral functionals
//! `INT(expr in y)`. Functionals are evaluated against the measure argument
//! when the expression is bound; everything else is a pointwise function of
//! the state.

use crate::error::{Error, Result};
use crate::measure::MomentKind;
use std::fmt;

/// Comparison direction of an indicator node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndOp {
    /// `IND(e >= c)`
    Ge,
    /// `IND(e <= c)`
    Le,
}

/// Coefficient expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum CoeffExpr {
    /// Literal constant.
    Const(f64),
    /// State coordinate `x{i+1}`.
    X(usize),
    /// Integration coordinate `y{i+1}`; valid only inside `Int` bodies.
    Y(usize),
    Add(Box<CoeffExpr>, Box<CoeffExpr>),
    Sub(Box<CoeffExpr>, Box<CoeffExpr>),
    Mul(Box<CoeffExpr>, Box<CoeffExpr>),
    Div(Box<CoeffExpr>, Box<CoeffExpr>),
    /// `base ^ exponent`.
    Pow(Box<CoeffExpr>, Box<CoeffExpr>),
    Neg(Box<CoeffExpr>),
    Abs(Box<CoeffExpr>),
    Min(Box<CoeffExpr>, Box<CoeffExpr>),
    Max(Box<CoeffExpr>, Box<CoeffExpr>),
    /// `IND(e >= c)` or `IND(e <= c)`: 1 when the comparison holds, else 0.
    Ind(Box<CoeffExpr>, IndOp, f64),
    /// Moment functional of the measure argument.
    Mom(f64, MomentKind),
    /// `INT(body)` = integral of `body(y)` against the measure argument.
    Int(Box<CoeffExpr>),
}

impl CoeffExpr {
    /// Smallest state dimension this expression is defined on.
    pub fn min_dim(&self) -> usize {
        let mut d = 0usize;
        self.visit(&mut |e| {
            if let CoeffExpr::X(i) | CoeffExpr::Y(i) = e {
                d = d.max(i + 1);
            }
        });
        d
    }

    /// True if any node is a functional of the measure argument.
    pub fn depends_on_measure(&self) -> bool {
        let mut dep = false;
        self.visit(&mut |e| {
            if matches!(e, CoeffExpr::Mom(..) | CoeffExpr::Int(..)) {
                dep = true;
            }
        });
        dep
    }

    /// Pre-order traversal over every node including functional bodies.
    pub fn visit(&self, f: &mut impl FnMut(&CoeffExpr)) {
        f(self);
        match self {
            CoeffExpr::Const(_) | CoeffExpr::X(_) | CoeffExpr::Y(_) | CoeffExpr::Mom(..) => {}
            CoeffExpr::Add(a, b)
            | CoeffExpr::Sub(a, b)
            | CoeffExpr::Mul(a, b)
            | CoeffExpr::Div(a, b)
            | CoeffExpr::Pow(a, b)
            | CoeffExpr::Min(a, b)
            | CoeffExpr::Max(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            CoeffExpr::Neg(a) | CoeffExpr::Abs(a) | CoeffExpr::Ind(a, _, _) | CoeffExpr::Int(a) => {
                a.visit(f)
            }
        }
    }

    /// Structural well-formedness: `y` variables appear only inside `INT`
    /// bodies, `INT` bodies contain no `x` variables and no nested
    /// functionals, and moment orders are nonnegative finite numbers.
    pub fn validate(&self) -> Result<()> {
        self.validate_at(false)
    }

    fn validate_at(&self, inside_int: bool) -> Result<()> {
        match self {
            CoeffExpr::Const(c) => {
                if !c.is_finite() {
                    return Err(Error::config("non-finite literal in expression"));
                }
                Ok(())
            }
            CoeffExpr::X(_) => {
                if inside_int {
                    return Err(Error::config(
                        "x variables cannot appear inside INT(...); rewrite the integrand in y only",
                    ));
                }
                Ok(())
            }
            CoeffExpr::Y(_) => {
                if !inside_int {
                    return Err(Error::config(
                        "y variables are only valid inside INT(...) bodies",
                    ));
                }
                Ok(())
            }
            CoeffExpr::Add(a, b)
            | CoeffExpr::Sub(a, b)
            | CoeffExpr::Mul(a, b)
            | CoeffExpr::Div(a, b)
            | CoeffExpr::Pow(a, b)
            | CoeffExpr::Min(a, b)
            | CoeffExpr::Max(a, b) => {
                a.validate_at(inside_int)?;
                b.validate_at(inside_int)
            }
            CoeffExpr::Neg(a) | CoeffExpr::Abs(a) => a.validate_at(inside_int),
            CoeffExpr::Ind(a, _, c) => {
                if !c.is_finite() {
                    return Err(Error::config("non-finite indicator threshold"));
                }
                a.validate_at(inside_int)
            }
            CoeffExpr::Mom(p, _) => {
                if inside_int {
                    return Err(Error::config("MOM(...) cannot be nested inside INT(...)"));
                }
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(Error::config("moment order must be a nonnegative number"));
                }
                Ok(())
            }
            CoeffExpr::Int(body) => {
                if inside_int {
                    return Err(Error::config("INT(...) cannot be nested inside INT(...)"));
                }
                body.validate_at(true)
            }
        }
    }

    /// Constant folding plus unit/zero identities; keeps evaluation and
    /// derivative trees small. Folding uses the same operations evaluation
    /// uses, so values are unchanged bit-for-bit on all finite inputs.
    pub fn simplify(self) -> CoeffExpr {
        use CoeffExpr::*;
        let is_zero = |e: &CoeffExpr| matches!(e, Const(c) if *c == 0.0);
        let is_one = |e: &CoeffExpr| matches!(e, Const(c) if *c == 1.0);
        match self {
            Add(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x + y),
                    _ if is_zero(&a) => b,
                    _ if is_zero(&b) => a,
                    _ => Add(Box::new(a), Box::new(b)),
                }
            }
            Sub(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x - y),
                    _ if is_zero(&b) => a,
                    _ if is_zero(&a) => Neg(Box::new(b)).simplify(),
                    _ => Sub(Box::new(a), Box::new(b)),
                }
            }
            Mul(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x * y),
                    _ if is_zero(&a) || is_zero(&b) => Const(0.0),
                    _ if is_one(&a) => b,
                    _ if is_one(&b) => a,
                    _ => Mul(Box::new(a), Box::new(b)),
                }
            }
            Div(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) if *y != 0.0 => Const(x / y),
                    _ if is_one(&b) => a,
                    _ if is_zero(&a) && !matches!(b, Const(c) if c == 0.0) => {
                        Div(Box::new(Const(0.0)), Box::new(b))
                    }
                    _ => Div(Box::new(a), Box::new(b)),
                }
            }
            Pow(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x.powf(*y)),
                    _ if is_one(&b) => a,
                    _ if is_zero(&b) => Const(1.0),
                    _ => Pow(Box::new(a), Box::new(b)),
                }
            }
            Neg(a) => {
                let a = a.simplify();
                match a {
                    Const(x) => Const(-x),
                    Neg(inner) => *inner,
                    _ => Neg(Box::new(a)),
                }
            }
            Abs(a) => {
                let a = a.simplify();
                match a {
                    Const(x) => Const(x.abs()),
                    _ => Abs(Box::new(a)),
                }
            }
            Min(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x.min(*y)),
                    _ => Min(Box::new(a), Box::new(b)),
                }
            }
            Max(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Const(x), Const(y)) => Const(x.max(*y)),
                    _ => Max(Box::new(a), Box::new(b)),
                }
            }
            Ind(a, op, c) => {
                let a = a.simplify();
                match &a {
                    Const(x) => Const(match op {
                        IndOp::Ge => {
                            if *x >= c {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        IndOp::Le => {
                            if *x <= c {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    }),
                    _ => Ind(Box::new(a), op, c),
                }
            }
            Int(body) => Int(Box::new(body.simplify())),
            leaf => leaf,
        }
    }

    /// Symbolic partial derivative with respect to `x{i+1}`, expressed in
    /// the same node language (indicators stand in for sign functions and
    /// branch selectors almost everywhere; kink points get the symmetric
    /// subgradient).
    pub fn diff_x(&self, i: usize) -> Result<CoeffExpr> {
        use CoeffExpr::*;
        Ok(match self {
            Const(_) | Mom(..) | Int(_) | Y(_) | Ind(..) => Const(0.0),
            X(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Add(a, b) => Add(Box::new(a.diff_x(i)?), Box::new(b.diff_x(i)?)),
            Sub(a, b) => Sub(Box::new(a.diff_x(i)?), Box::new(b.diff_x(i)?)),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.diff_x(i)?), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.diff_x(i)?))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.diff_x(i)?), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.diff_x(i)?))),
                )),
                Box::new(Mul(b.clone(), b.clone())),
            ),
            Pow(base, exp) => match exp.as_ref() {
                Const(k) => Mul(
                    Box::new(Mul(
                        Box::new(Const(*k)),
                        Box::new(Pow(base.clone(), Box::new(Const(k - 1.0)))),
                    )),
                    Box::new(base.diff_x(i)?),
                ),
                _ => {
                    if base.diff_x(i)?.simplify() == Const(0.0)
                        && exp.diff_x(i)?.simplify() == Const(0.0)
                    {
                        Const(0.0)
                    } else {
                        return Err(Error::config(
                            "cannot differentiate a power with non-constant exponent",
                        ));
                    }
                }
            },
            Neg(a) => Neg(Box::new(a.diff_x(i)?)),
            // d|u| = (1_{u>=0} - 1_{u<=0}) u' : the symmetric subgradient,
            // zero exactly at the kink.
            Abs(a) => Mul(
                Box::new(Sub(
                    Box::new(Ind(a.clone(), IndOp::Ge, 0.0)),
                    Box::new(Ind(a.clone(), IndOp::Le, 0.0)),
                )),
                Box::new(a.diff_x(i)?),
            ),
            // d min(u,v) = u' + 1_{u-v>=0} (v'-u'); one-sided at ties.
            Min(a, b) => {
                let selector = Ind(
                    Box::new(Sub(a.clone(), b.clone()).simplify()),
                    IndOp::Ge,
                    0.0,
                );
                Add(
                    Box::new(a.diff_x(i)?),
                    Box::new(Mul(
                        Box::new(selector),
                        Box::new(Sub(Box::new(b.diff_x(i)?), Box::new(a.diff_x(i)?))),
                    )),
                )
            }
            // d max(u,v) = u' + 1_{v-u>=0} (v'-u').
            Max(a, b) => {
                let selector = Ind(
                    Box::new(Sub(b.clone(), a.clone()).simplify()),
                    IndOp::Ge,
                    0.0,
                );
                Add(
                    Box::new(a.diff_x(i)?),
                    Box::new(Mul(
                        Box::new(selector),
                        Box::new(Sub(Box::new(b.diff_x(i)?), Box::new(a.diff_x(i)?))),
                    )),
                )
            }
        }
        .simplify())
    }
}

/// Operator precedence used by the printer (higher binds tighter).
fn precedence(e: &CoeffExpr) -> u8 {
    match e {
        CoeffExpr::Add(..) | CoeffExpr::Sub(..) => 1,
        CoeffExpr::Mul(..) | CoeffExpr::Div(..) => 2,
        CoeffExpr::Neg(..) => 3,
        CoeffExpr::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &CoeffExpr, min_prec: u8) -> fmt::Result {
    if precedence(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CoeffExpr::*;
        match self {
            Const(c) => {
                if *c < 0.0 {
                    // Negative literals print parenthesized so the text
                    // re-parses to the identical tree (no unary-minus node).
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            X(i) => write!(f, "x{}", i + 1),
            Y(i) => write!(f, "y{}", i + 1),
            Add(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " + ")?;
                fmt_child(f, b, 2)
            }
            Sub(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " - ")?;
                fmt_child(f, b, 2)
            }
            Mul(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, " * ")?;
                fmt_child(f, b, 3)
            }
            Div(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, " / ")?;
                fmt_child(f, b, 3)
            }
            Pow(a, b) => {
                fmt_child(f, a, 5)?;
                write!(f, "^")?;
                fmt_child(f, b, 5)
            }
            Neg(a) => {
                write!(f, "-")?;
                fmt_child(f, a, 3)
            }
            Abs(a) => write!(f, "ABS({a})"),
            Min(a, b) => write!(f, "MIN({a}, {b})"),
            Max(a, b) => write!(f, "MAX({a}, {b})"),
            Ind(a, op, c) => {
                let sym = match op {
                    IndOp::Ge => ">=",
                    IndOp::Le => "<=",
                };
                if *c < 0.0 {
                    write!(f, "IND({a} {sym} ({c}))")
                } else {
                    write!(f, "IND({a} {sym} {c})")
                }
            }
            Mom(p, kind) => {
                let k = match kind {
                    MomentKind::Abs => "abs".to_string(),
                    MomentKind::Radial => "radial".to_string(),
                    MomentKind::Component(i) => format!("y{}", i + 1),
                };
                write!(f, "MOM({p}, {k})")
            }
            Int(body) => write!(f, "INT({body})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CoeffExpr::*;

    fn x1() -> CoeffExpr {
        X(0)
    }

    #[test]
    fn printer_uses_minimal_parentheses() {
        let e = Mul(
            Box::new(Add(Box::new(x1()), Box::new(Const(1.0)))),
            Box::new(X(1)),
        );
        assert_eq!(e.to_string(), "(x1 + 1) * x2");
        let e2 = Add(
            Box::new(Mul(Box::new(x1()), Box::new(X(1)))),
            Box::new(Const(1.0)),
        );
        assert_eq!(e2.to_string(), "x1 * x2 + 1");
    }

    #[test]
    fn derivative_of_squared_coordinate() {
        // d/dx1 of x1^2 = 2 x1.
        let e = Pow(Box::new(x1()), Box::new(Const(2.0)));
        let d = e.diff_x(0).unwrap();
        assert_eq!(d, Mul(Box::new(Const(2.0)), Box::new(x1())));
    }

    #[test]
    fn derivative_of_abs_is_signed_indicator() {
        let e = Abs(Box::new(x1()));
        let d = e.diff_x(0).unwrap();
        // At x = 2 the derivative is 1, at x = -2 it is -1, at 0 it is 0.
        let eval = |expr: &CoeffExpr, x: f64| -> f64 {
            match expr {
                Sub(a, b) => match (a.as_ref(), b.as_ref()) {
                    (Ind(_, IndOp::Ge, _), Ind(_, IndOp::Le, _)) => {
                        let ge = if x >= 0.0 { 1.0 } else { 0.0 };
                        let le = if x <= 0.0 { 1.0 } else { 0.0 };
                        ge - le
                    }
                    _ => panic!("unexpected shape {expr}"),
                },
                _ => panic!("unexpected shape {expr}"),
            }
        };
        assert_eq!(eval(&d, 2.0), 1.0);
        assert_eq!(eval(&d, -2.0), -1.0);
        assert_eq!(eval(&d, 0.0), 0.0);
    }

    #[test]
    fn functionals_have_zero_x_derivative() {
        let e = Add(
            Box::new(Mom(1.0, MomentKind::Abs)),
            Box::new(Int(Box::new(Mul(Box::new(Y(0)), Box::new(Y(0))))))
        );
        assert_eq!(e.diff_x(0).unwrap(), Const(0.0));
    }

    #[test]
    fn validation_rejects_x_inside_int_and_stray_y() {
        let bad = Int(Box::new(x1()));
        assert!(bad.validate().is_err());
        let stray = Add(Box::new(Y(0)), Box::new(Const(1.0)));
        assert!(stray.validate().is_err());
        let good = Int(Box::new(Mul(Box::new(Const(2.0)), Box::new(Y(0)))));
        assert!(good.validate().is_ok());
    }

    #[test]
    fn simplify_folds_constants_and_identities() {
        let e = Add(
            Box::new(Mul(Box::new(Const(0.0)), Box::new(x1()))),
            Box::new(Mul(Box::new(Const(1.0)), Box::new(x1()))),
        );
        assert_eq!(e.simplify(), x1());
        let p = Pow(Box::new(Const(2.0)), Box::new(Const(3.0)));
        assert_eq!(p.simplify(), Const(8.0));
    }

    #[test]
    fn min_dim_and_measure_dependence() {
        let e = Mul(
            Box::new(Pow(Box::new(x1()), Box::new(Const(2.0)))),
            Box::new(Pow(Box::new(Mom(1.0, MomentKind::Abs)), Box::new(Const(3.0)))),
        );
        assert_eq!(e.min_dim(), 1);
        assert!(e.depends_on_measure());
        assert!(!x1().depends_on_measure());
    }
}
