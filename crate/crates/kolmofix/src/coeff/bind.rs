//! Binding an expression to a fixed measure (evaluating its functionals to
//! constants) and compiling the result into fast pointwise-evaluation forms
//! for the inner loops of the solvers.

use crate::coeff::ast::{CoeffExpr, IndOp};
use crate::error::{Error, Result};
use crate::measure::Measure;
use std::sync::Arc;

/// Hard cap on the operand stack of compiled expressions; enforced at
/// compile time so evaluation can use a fixed-size stack with no checks.
const MAX_STACK: usize = 32;

/// One instruction of the postfix evaluator.
#[derive(Clone, Debug)]
enum Op {
    Push(f64),
    Load(usize),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Abs,
    Min,
    Max,
    /// Integer power of the top of stack.
    Powi(i32),
    /// Constant real power of the top of stack.
    Powf(f64),
    /// General power: top = exponent, next = base.
    Pow,
    IndGe(f64),
    IndLe(f64),
}

/// Compiled postfix program with its printed source for error messages.
#[derive(Clone, Debug)]
pub struct Bytecode {
    ops: Vec<Op>,
    label: String,
}

impl Bytecode {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut stack = [0.0f64; MAX_STACK];
        let mut sp = 0usize;
        for op in &self.ops {
            match op {
                Op::Push(c) => {
                    stack[sp] = *c;
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = x[*i];
                    sp += 1;
                }
                Op::Add => {
                    sp -= 1;
                    stack[sp - 1] += stack[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    stack[sp - 1] -= stack[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    stack[sp - 1] *= stack[sp];
                }
                Op::Div => {
                    sp -= 1;
                    if stack[sp] == 0.0 {
                        return Err(Error::DivisionByZero {
                            expr: self.label.clone(),
                            x: x.to_vec(),
                        });
                    }
                    stack[sp - 1] /= stack[sp];
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Abs => stack[sp - 1] = stack[sp - 1].abs(),
                Op::Min => {
                    sp -= 1;
                    stack[sp - 1] = stack[sp - 1].min(stack[sp]);
                }
                Op::Max => {
                    sp -= 1;
                    stack[sp - 1] = stack[sp - 1].max(stack[sp]);
                }
                Op::Powi(k) => stack[sp - 1] = stack[sp - 1].powi(*k),
                Op::Powf(k) => stack[sp - 1] = stack[sp - 1].powf(*k),
                Op::Pow => {
                    sp -= 1;
                    stack[sp - 1] = stack[sp - 1].powf(stack[sp]);
                }
                Op::IndGe(c) => {
                    stack[sp - 1] = if stack[sp - 1] >= *c { 1.0 } else { 0.0 }
                }
                Op::IndLe(c) => {
                    stack[sp - 1] = if stack[sp - 1] <= *c { 1.0 } else { 0.0 }
                }
            }
        }
        let v = stack[0];
        if !v.is_finite() {
            return Err(Error::NonFiniteCoeff {
                expr: self.label.clone(),
                x: x.to_vec(),
            });
        }
        Ok(v)
    }
}

/// A coefficient with its measure argument fixed, ready for pointwise
/// evaluation. Constant and affine shapes are recognized so the hot loops
/// of the trajectory backend pay nothing for the expression language.
#[derive(Clone)]
pub enum BoundCoeff {
    /// Value independent of the state.
    Const(f64),
    /// `c0 + Σ lin[i]·x[i]`.
    Affine { c0: f64, lin: Vec<f64> },
    /// General compiled expression.
    Code(Bytecode),
    /// Opaque function (mollified or user-native coefficients).
    Native(Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>),
}

impl std::fmt::Debug for BoundCoeff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundCoeff::Const(c) => write!(f, "Const({c})"),
            BoundCoeff::Affine { c0, lin } => write!(f, "Affine({c0} + {lin:?}·x)"),
            BoundCoeff::Code(bc) => write!(f, "Code({})", bc.label),
            BoundCoeff::Native(_) => write!(f, "Native(..)"),
        }
    }
}

impl BoundCoeff {
    /// Pointwise evaluation at a state.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            BoundCoeff::Const(c) => Ok(*c),
            BoundCoeff::Affine { c0, lin } => {
                let mut v = *c0;
                for (l, xi) in lin.iter().zip(x) {
                    v += l * xi;
                }
                Ok(v)
            }
            BoundCoeff::Code(bc) => bc.eval(x),
            BoundCoeff::Native(f) => f(x),
        }
    }

    /// The constant value, when the coefficient is state-independent.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            BoundCoeff::Const(c) => Some(*c),
            _ => None,
        }
    }
}

/// Evaluate an integration-variable expression at a single point `y`.
/// Only `Y` leaves, constants, and pointwise operations may appear (the
/// validator guarantees this for `INT` bodies).
fn eval_y(e: &CoeffExpr, y: &[f64]) -> Result<f64> {
    use CoeffExpr::*;
    Ok(match e {
        Const(c) => *c,
        Y(i) => {
            if *i >= y.len() {
                return Err(Error::config(format!(
                    "integrand references y{} but the measure has dimension {}",
                    i + 1,
                    y.len()
                )));
            }
            y[*i]
        }
        X(_) | Mom(..) | Int(_) => {
            return Err(Error::config(
                "invalid node inside INT body (validator should have rejected this)",
            ))
        }
        Add(a, b) => eval_y(a, y)? + eval_y(b, y)?,
        Sub(a, b) => eval_y(a, y)? - eval_y(b, y)?,
        Mul(a, b) => eval_y(a, y)? * eval_y(b, y)?,
        Div(a, b) => {
            let d = eval_y(b, y)?;
            if d == 0.0 {
                return Err(Error::DivisionByZero {
                    expr: e.to_string(),
                    x: y.to_vec(),
                });
            }
            eval_y(a, y)? / d
        }
        Pow(a, b) => eval_y(a, y)?.powf(eval_y(b, y)?),
        Neg(a) => -eval_y(a, y)?,
        Abs(a) => eval_y(a, y)?.abs(),
        Min(a, b) => eval_y(a, y)?.min(eval_y(b, y)?),
        Max(a, b) => eval_y(a, y)?.max(eval_y(b, y)?),
        Ind(a, op, c) => {
            let v = eval_y(a, y)?;
            match op {
                IndOp::Ge => {
                    if v >= *c {
                        1.0
                    } else {
                        0.0
                    }
                }
                IndOp::Le => {
                    if v <= *c {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        }
    })
}

/// Replace every functional node with the constant it evaluates to under
/// `mu`. Identical functional nodes are computed once per call.
pub fn substitute_functionals(e: &CoeffExpr, mu: &Measure) -> Result<CoeffExpr> {
    let mut cache: Vec<(CoeffExpr, f64)> = Vec::new();
    substitute_inner(e, mu, &mut cache)
}

fn substitute_inner(
    e: &CoeffExpr,
    mu: &Measure,
    cache: &mut Vec<(CoeffExpr, f64)>,
) -> Result<CoeffExpr> {
    use CoeffExpr::*;
    let functional_value = |e: &CoeffExpr, cache: &mut Vec<(CoeffExpr, f64)>| -> Result<f64> {
        if let Some((_, v)) = cache.iter().find(|(k, _)| k == e) {
            return Ok(*v);
        }
        let v = match e {
            Mom(p, kind) => crate::measure::ops::moment(mu, *p, *kind)?,
            Int(body) => {
                let mut first_err: Option<Error> = None;
                let total = mu.integrate(|y| match eval_y(body, y) {
                    Ok(v) => v,
                    Err(err) => {
                        if first_err.is_none() {
                            first_err = Some(err);
                        }
                        f64::NAN
                    }
                });
                if let Some(err) = first_err {
                    return Err(err);
                }
                if !total.is_finite() {
                    return Err(Error::NonFiniteCoeff {
                        expr: e.to_string(),
                        x: vec![],
                    });
                }
                total
            }
            _ => unreachable!("only functionals enter the cache"),
        };
        cache.push((e.clone(), v));
        Ok(v)
    };
    Ok(match e {
        Mom(..) | Int(_) => Const(functional_value(e, cache)?),
        Const(_) | X(_) | Y(_) => e.clone(),
        Add(a, b) => Add(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Sub(a, b) => Sub(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Mul(a, b) => Mul(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Div(a, b) => Div(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Pow(a, b) => Pow(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Min(a, b) => Min(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Max(a, b) => Max(
            Box::new(substitute_inner(a, mu, cache)?),
            Box::new(substitute_inner(b, mu, cache)?),
        ),
        Neg(a) => Neg(Box::new(substitute_inner(a, mu, cache)?)),
        Abs(a) => Abs(Box::new(substitute_inner(a, mu, cache)?)),
        Ind(a, op, c) => Ind(Box::new(substitute_inner(a, mu, cache)?), *op, *c),
    })
}

/// Affine reading of a measure-free expression: `Some((c0, lin))` when the
/// expression equals `c0 + Σ lin[i]·x[i]` identically.
fn as_affine(e: &CoeffExpr, dim: usize) -> Option<(f64, Vec<f64>)> {
    use CoeffExpr::*;
    match e {
        Const(c) => Some((*c, vec![0.0; dim])),
        X(i) if *i < dim => {
            let mut lin = vec![0.0; dim];
            lin[*i] = 1.0;
            Some((0.0, lin))
        }
        Add(a, b) => {
            let (ca, la) = as_affine(a, dim)?;
            let (cb, lb) = as_affine(b, dim)?;
            Some((ca + cb, la.iter().zip(&lb).map(|(x, y)| x + y).collect()))
        }
        Sub(a, b) => {
            let (ca, la) = as_affine(a, dim)?;
            let (cb, lb) = as_affine(b, dim)?;
            Some((ca - cb, la.iter().zip(&lb).map(|(x, y)| x - y).collect()))
        }
        Neg(a) => {
            let (c, l) = as_affine(a, dim)?;
            Some((-c, l.iter().map(|x| -x).collect()))
        }
        Mul(a, b) => {
            let (ca, la) = as_affine(a, dim)?;
            let (cb, lb) = as_affine(b, dim)?;
            let a_const = la.iter().all(|&v| v == 0.0);
            let b_const = lb.iter().all(|&v| v == 0.0);
            if a_const {
                Some((ca * cb, lb.iter().map(|x| ca * x).collect()))
            } else if b_const {
                Some((ca * cb, la.iter().map(|x| cb * x).collect()))
            } else {
                None
            }
        }
        Div(a, b) => {
            let (ca, la) = as_affine(a, dim)?;
            let (cb, lb) = as_affine(b, dim)?;
            if lb.iter().all(|&v| v == 0.0) && cb != 0.0 {
                Some((ca / cb, la.iter().map(|x| x / cb).collect()))
            } else {
                None
            }
        }
        Pow(a, b) => match b.as_ref() {
            Const(k) if *k == 1.0 => as_affine(a, dim),
            _ => None,
        },
        _ => None,
    }
}

/// Postfix-compile a measure-free expression. Returns the ops and the
/// maximal stack depth used.
fn flatten(e: &CoeffExpr, ops: &mut Vec<Op>, depth: usize, max_depth: &mut usize) -> Result<()> {
    use CoeffExpr::*;
    *max_depth = (*max_depth).max(depth + 1);
    if depth + 1 > MAX_STACK {
        return Err(Error::config("expression too deeply nested to compile"));
    }
    match e {
        Const(c) => ops.push(Op::Push(*c)),
        X(i) => ops.push(Op::Load(*i)),
        Y(_) | Mom(..) | Int(_) => {
            return Err(Error::config(
                "unbound functional or stray integration variable at compile time",
            ))
        }
        Add(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Add);
        }
        Sub(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Sub);
        }
        Mul(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Mul);
        }
        Div(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Div);
        }
        Pow(a, b) => match b.as_ref() {
            Const(k) if k.fract() == 0.0 && k.abs() <= 64.0 => {
                flatten(a, ops, depth, max_depth)?;
                ops.push(Op::Powi(*k as i32));
            }
            Const(k) => {
                flatten(a, ops, depth, max_depth)?;
                ops.push(Op::Powf(*k));
            }
            _ => {
                flatten(a, ops, depth, max_depth)?;
                flatten(b, ops, depth + 1, max_depth)?;
                ops.push(Op::Pow);
            }
        },
        Neg(a) => {
            flatten(a, ops, depth, max_depth)?;
            ops.push(Op::Neg);
        }
        Abs(a) => {
            flatten(a, ops, depth, max_depth)?;
            ops.push(Op::Abs);
        }
        Min(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Min);
        }
        Max(a, b) => {
            flatten(a, ops, depth, max_depth)?;
            flatten(b, ops, depth + 1, max_depth)?;
            ops.push(Op::Max);
        }
        Ind(a, op, c) => {
            flatten(a, ops, depth, max_depth)?;
            ops.push(match op {
                IndOp::Ge => Op::IndGe(*c),
                IndOp::Le => Op::IndLe(*c),
            });
        }
    }
    Ok(())
}

/// Bind an expression to a measure and compile it: functionals become
/// constants, the tree is simplified, and constant/affine shapes are
/// recognized for allocation-free evaluation.
pub fn bind_expr(e: &CoeffExpr, mu: &Measure, dim: usize) -> Result<BoundCoeff> {
    let bound = substitute_functionals(e, mu)?.simplify();
    if let Some((c0, lin)) = as_affine(&bound, dim) {
        if lin.iter().all(|&v| v == 0.0) {
            return Ok(BoundCoeff::Const(c0));
        }
        return Ok(BoundCoeff::Affine { c0, lin });
    }
    let mut ops = Vec::new();
    let mut max_depth = 0usize;
    flatten(&bound, &mut ops, 0, &mut max_depth)?;
    Ok(BoundCoeff::Code(Bytecode {
        ops,
        label: bound.to_string(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::parse::parse_coeff;
    use crate::measure::discrete::DiscreteMeasure;

    fn two_point() -> Measure {
        // ∫|y| dμ = 1, ∫y dμ = 0, ∫y² dμ = 1.
        Measure::Discrete(
            DiscreteMeasure::probability(1, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn interaction_diffusion_binds_to_a_monomial() {
        // a(x, μ) = x² (∫|y|dμ)³ = x² at the symmetric two-point measure;
        // at x = 2 the value is 4.
        let e = parse_coeff("x1^2 * MOM(1,abs)^3").unwrap();
        let b = bind_expr(&e, &two_point(), 1).unwrap();
        assert_eq!(b.eval(&[2.0]).unwrap(), 4.0);
        assert_eq!(b.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn interaction_drift_binds_and_evaluates() {
        // b(x, μ) = -2 x³ ∫|y|dμ; at x = 1 the value is -2.
        let e = parse_coeff("-2 * x1^3 * MOM(1,abs)").unwrap();
        let b = bind_expr(&e, &two_point(), 1).unwrap();
        assert_eq!(b.eval(&[1.0]).unwrap(), -2.0);
    }

    #[test]
    fn one_sided_diffusion_is_zero_on_the_negative_axis() {
        let e = parse_coeff("x1 * IND(x1 >= 0)").unwrap();
        let b = bind_expr(&e, &two_point(), 1).unwrap();
        assert_eq!(b.eval(&[-3.0]).unwrap(), 0.0);
        assert_eq!(b.eval(&[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn int_functional_becomes_a_constant() {
        let e = parse_coeff("INT(2*y1) - x1").unwrap();
        let b = bind_expr(&e, &two_point(), 1).unwrap();
        // ∫2y dμ = 0, so the bound coefficient is -x.
        match &b {
            BoundCoeff::Affine { c0, lin } => {
                assert_eq!(*c0, 0.0);
                assert_eq!(lin, &[-1.0]);
            }
            other => panic!("expected affine, got {other:?}"),
        }
        assert_eq!(b.eval(&[0.75]).unwrap(), -0.75);
    }

    #[test]
    fn constant_fields_compile_to_const() {
        let e = parse_coeff("1").unwrap();
        assert!(matches!(
            bind_expr(&e, &two_point(), 1).unwrap(),
            BoundCoeff::Const(c) if c == 1.0
        ));
        let e2 = parse_coeff("MOM(2, radial) + 1").unwrap();
        assert!(matches!(
            bind_expr(&e2, &two_point(), 1).unwrap(),
            BoundCoeff::Const(c) if c == 2.0
        ));
    }

    #[test]
    fn division_by_zero_is_reported_with_the_point() {
        let e = parse_coeff("1 / x1").unwrap();
        let b = bind_expr(&e, &two_point(), 1).unwrap();
        match b.eval(&[0.0]) {
            Err(Error::DivisionByZero { x, .. }) => assert_eq!(x, vec![0.0]),
            other => panic!("expected division error, got {other:?}"),
        }
        assert_eq!(b.eval(&[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn evaluation_is_bit_reproducible() {
        let e = parse_coeff("MAX(0, 1 - ABS(x1)) * MOM(1, abs) + INT(y1^2) / 3").unwrap();
        let mu = two_point();
        let x = [0.3];
        let v1 = bind_expr(&e, &mu, 1).unwrap().eval(&x).unwrap();
        let v2 = bind_expr(&e, &mu, 1).unwrap().eval(&x).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let mut text = String::from("x1");
        for _ in 0..40 {
            text = format!("ABS({text} + x1)");
        }
        let e = parse_coeff(&text).unwrap();
        // Either compiles within the stack cap or reports a clean error.
        if let Err(e) = bind_expr(&e, &two_point(), 1) {
            assert!(e.to_string().contains("nested"), "{e}");
        }
    }

    #[test]
    fn component_moment_kind() {
        let mu = Measure::Discrete(
            DiscreteMeasure::probability(2, vec![1.0, 3.0, 2.0, 5.0], vec![0.5, 0.5]).unwrap(),
        );
        let e = parse_coeff("MOM(1, y2)").unwrap();
        let b = bind_expr(&e, &mu, 2).unwrap();
        assert_eq!(b.eval(&[0.0, 0.0]).unwrap(), 4.0);
    }
}
