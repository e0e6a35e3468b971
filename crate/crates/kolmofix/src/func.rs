//! Scalar-field handles.
//!
//! Lyapunov candidates, cutoffs, weights, and weak-form test functions are
//! all passed around as trait objects so that expression-backed fields,
//! closed-form fields, and composites share one calling convention.

/// A scalar field on `R^dim`.
pub trait ScalarFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// A twice differentiable scalar field with exact derivatives.
pub trait C2Fn: ScalarFn {
    /// Gradient into `out` (length `dim`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Hessian into `out` (row-major `dim x dim`).
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

/// Closure-backed scalar field (values only).
pub struct ClosureFn<F: Fn(&[f64]) -> f64 + Send + Sync> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ClosureFn<F> {
    pub fn new(dim: usize, f: F) -> Self {
        ClosureFn { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarFn for ClosureFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Closure-backed C^2 field: `(value, gradient, hessian)` closures.
pub struct ClosureC2<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
    H: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    dim: usize,
    v: V,
    g: G,
    h: H,
}

impl<V, G, H> ClosureC2<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
    H: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, v: V, g: G, h: H) -> Self {
        ClosureC2 { dim, v, g, h }
    }
}

impl<V, G, H> ScalarFn for ClosureC2<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
    H: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.v)(x)
    }
}

impl<V, G, H> C2Fn for ClosureC2<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
    H: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.g)(x, out)
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        (self.h)(x, out)
    }
}

/// The quadratic `x -> |x|^2 / 2`, the workhorse growth gauge.
pub struct HalfSquare {
    dim: usize,
}

impl HalfSquare {
    pub fn new(dim: usize) -> Self {
        HalfSquare { dim }
    }
}

impl ScalarFn for HalfSquare {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
}

impl C2Fn for HalfSquare {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = 1.0;
        }
    }
}
