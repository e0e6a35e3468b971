//! Coefficient fields: the symmetric diffusion matrix `a` and drift vector
//! `b`, each entry either an expression tree or an opaque native function,
//! together with the non-degeneracy split index `m` (the leading block of
//! `a` that must stay positive definite).

use crate::coeff::ast::CoeffExpr;
use crate::coeff::bind::{bind_expr, BoundCoeff};
use crate::error::{Error, Result};
use crate::measure::Measure;
use std::sync::Arc;

/// Opaque coefficient implementation (used for mollified fields and other
/// coefficients that have no expression form).
#[derive(Clone)]
pub struct NativeEntry {
    /// Human-readable description for reports and error messages.
    pub label: String,
    /// `(x, mu) -> value`.
    pub f: Arc<dyn Fn(&[f64], &Measure) -> Result<f64> + Send + Sync>,
}

/// One entry of the coefficient field.
#[derive(Clone)]
pub enum CoeffEntry {
    Expr(CoeffExpr),
    Native(NativeEntry),
}

impl std::fmt::Debug for CoeffEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoeffEntry::Expr(e) => write!(f, "{e}"),
            CoeffEntry::Native(n) => write!(f, "native:{}", n.label),
        }
    }
}

impl CoeffEntry {
    /// Text form used in reports (expression text or native label).
    pub fn describe(&self) -> String {
        match self {
            CoeffEntry::Expr(e) => e.to_string(),
            CoeffEntry::Native(n) => format!("native:{}", n.label),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            CoeffEntry::Expr(e) => {
                e.validate()?;
                if e.min_dim() > dim {
                    return Err(Error::config(format!(
                        "expression `{e}` references coordinate {} beyond dimension {dim}",
                        e.min_dim()
                    )));
                }
                Ok(())
            }
            CoeffEntry::Native(_) => Ok(()),
        }
    }

    fn same_as(&self, other: &CoeffEntry) -> bool {
        match (self, other) {
            (CoeffEntry::Expr(a), CoeffEntry::Expr(b)) => a == b,
            (CoeffEntry::Native(a), CoeffEntry::Native(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }

    /// True when the entry may change with the measure argument. Native
    /// entries are conservatively treated as measure-dependent.
    pub fn depends_on_measure(&self) -> bool {
        match self {
            CoeffEntry::Expr(e) => e.depends_on_measure(),
            CoeffEntry::Native(_) => true,
        }
    }

    /// Bind to a fixed measure for pointwise evaluation.
    pub fn bind(&self, mu: &Measure, dim: usize) -> Result<BoundCoeff> {
        match self {
            CoeffEntry::Expr(e) => bind_expr(e, mu, dim),
            CoeffEntry::Native(n) => {
                let f = n.f.clone();
                let frozen = mu.clone();
                Ok(BoundCoeff::Native(Arc::new(move |x: &[f64]| {
                    f(x, &frozen)
                })))
            }
        }
    }
}

impl From<CoeffExpr> for CoeffEntry {
    fn from(e: CoeffExpr) -> Self {
        CoeffEntry::Expr(e)
    }
}

/// The full coefficient field of one problem: symmetric `d×d` diffusion
/// matrix `a`, drift vector `b`, state dimension `dim`, and the size `m`
/// of the leading block of `a` required to be positive definite (`m = 0`
/// means the diffusion may degenerate everywhere).
#[derive(Clone, Debug)]
pub struct CoefficientField {
    dim: usize,
    m: usize,
    /// Row-major `dim × dim`.
    a: Vec<CoeffEntry>,
    b: Vec<CoeffEntry>,
}

impl CoefficientField {
    pub fn new(dim: usize, m: usize, a: Vec<CoeffEntry>, b: Vec<CoeffEntry>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if m > dim {
            return Err(Error::config(format!(
                "non-degeneracy split m = {m} exceeds dimension {dim}"
            )));
        }
        if a.len() != dim * dim {
            return Err(Error::config(format!(
                "diffusion matrix needs {} entries, got {}",
                dim * dim,
                a.len()
            )));
        }
        if b.len() != dim {
            return Err(Error::config(format!(
                "drift vector needs {dim} entries, got {}",
                b.len()
            )));
        }
        for e in a.iter().chain(b.iter()) {
            e.validate(dim)?;
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if !a[i * dim + j].same_as(&a[j * dim + i]) {
                    return Err(Error::config(format!(
                        "diffusion matrix must be symmetric: a[{}][{}] = {:?} differs from a[{}][{}] = {:?}",
                        i + 1, j + 1, a[i * dim + j],
                        j + 1, i + 1, a[j * dim + i],
                    )));
                }
            }
        }
        Ok(Self { dim, m, a, b })
    }

    /// 1-D convenience constructor.
    pub fn scalar(a: CoeffEntry, b: CoeffEntry, m: usize) -> Result<Self> {
        Self::new(1, m, vec![a], vec![b])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Size of the leading positive-definite block of `a`.
    pub fn split_m(&self) -> usize {
        self.m
    }

    pub fn a_entry(&self, i: usize, j: usize) -> &CoeffEntry {
        &self.a[i * self.dim + j]
    }

    pub fn b_entry(&self, i: usize) -> &CoeffEntry {
        &self.b[i]
    }

    /// True when any entry can change with the measure argument.
    pub fn depends_on_measure(&self) -> bool {
        self.a
            .iter()
            .chain(self.b.iter())
            .any(|e| e.depends_on_measure())
    }

    /// Freeze the measure argument: evaluate all functionals and compile
    /// every entry for pointwise evaluation.
    pub fn bind(&self, mu: &Measure) -> Result<BoundField> {
        if mu.dim() != self.dim {
            return Err(Error::config(format!(
                "measure dimension {} does not match field dimension {}",
                mu.dim(),
                self.dim
            )));
        }
        let a = self
            .a
            .iter()
            .map(|e| e.bind(mu, self.dim))
            .collect::<Result<Vec<_>>>()?;
        let b = self
            .b
            .iter()
            .map(|e| e.bind(mu, self.dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundField {
            dim: self.dim,
            m: self.m,
            a,
            b,
        })
    }

    /// Apply a transformation to every entry (used by mollification).
    pub fn map_entries(
        &self,
        mut f: impl FnMut(&CoeffEntry, bool, usize, usize) -> Result<CoeffEntry>,
    ) -> Result<CoefficientField> {
        let mut a: Vec<CoeffEntry> = Vec::with_capacity(self.a.len());
        for i in 0..self.dim {
            for j in 0..self.dim {
                if j < i {
                    // Reuse the transform of the mirror entry so symmetry is
                    // preserved by construction (same Arc for natives).
                    a.push(a[j * self.dim + i].clone());
                } else {
                    a.push(f(self.a_entry(i, j), true, i, j)?);
                }
            }
        }
        let mut b = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            b.push(f(self.b_entry(i), false, i, 0)?);
        }
        CoefficientField::new(self.dim, self.m, a, b)
    }
}

/// A coefficient field with the measure argument frozen and every entry
/// compiled. This is what solvers evaluate along trajectories and grids.
#[derive(Clone, Debug)]
pub struct BoundField {
    dim: usize,
    m: usize,
    a: Vec<BoundCoeff>,
    b: Vec<BoundCoeff>,
}

impl BoundField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split_m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn eval_a(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        self.a[i * self.dim + j].eval(x)
    }

    #[inline]
    pub fn eval_b(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.b[i].eval(x)
    }

    pub fn a_coeff(&self, i: usize, j: usize) -> &BoundCoeff {
        &self.a[i * self.dim + j]
    }

    pub fn b_coeff(&self, i: usize) -> &BoundCoeff {
        &self.b[i]
    }

    /// Fill `out` (row-major `d×d`) with the diffusion matrix at `x`.
    pub fn a_matrix(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.eval_a(i, j, x)?;
                out[i * self.dim + j] = v;
                out[j * self.dim + i] = v;
            }
        }
        Ok(())
    }

    /// Fill `out` with the drift vector at `x`.
    pub fn b_vector(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..self.dim {
            out[i] = self.eval_b(i, x)?;
        }
        Ok(())
    }

    /// The diffusion matrix when every entry is state-independent.
    pub fn const_a(&self) -> Option<Vec<f64>> {
        self.a.iter().map(|c| c.as_const()).collect()
    }
}

/// Evaluate one expression at a state under a measure: functionals are
/// computed once per call (and shared across identical sub-expressions),
/// then the compiled form is evaluated at `x`.
pub fn eval_coeff(expr: &CoeffExpr, x: &[f64], mu: &Measure) -> Result<f64> {
    if x.len() != mu.dim() {
        return Err(Error::config(format!(
            "state has dimension {} but the measure has dimension {}",
            x.len(),
            mu.dim()
        )));
    }
    bind_expr(expr, mu, x.len())?.eval(x)
}
