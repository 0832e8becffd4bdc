//! Hermitian coefficient fields `A, B, C, W1, W2` built from expressions.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{block, from_blocks, hermitian_defect, min_eig, CMat, C64};
use crate::timescale::{Grid, TimeScale};

/// Tolerance for Hermiticity and weight semidefiniteness checks.
pub const FIELD_TOL: f64 = 1e-10;

/// One matrix entry. With `at_rho` set the expression is evaluated at `ρ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub expr: Expr,
    pub at_rho: bool,
}

impl Entry {
    pub fn new(expr: Expr) -> Entry {
        Entry { expr, at_rho: false }
    }

    pub fn shifted(expr: Expr) -> Entry {
        Entry { expr, at_rho: true }
    }

    pub fn zero() -> Entry {
        Entry::new(Expr::Num(0.0))
    }

    fn eval(&self, t: f64, rho: f64) -> Result<C64> {
        self.expr.eval(if self.at_rho { rho } else { t })
    }
}

/// A `d×d` matrix of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    d: usize,
    entries: Vec<Entry>,
}

impl ExprMatrix {
    pub fn new(d: usize, entries: Vec<Entry>) -> Result<ExprMatrix> {
        if entries.len() != d * d {
            return Err(Error::Dimension(format!("expected {} entries, got {}", d * d, entries.len())));
        }
        Ok(ExprMatrix { d, entries })
    }

    pub fn from_exprs(d: usize, exprs: Vec<Expr>) -> Result<ExprMatrix> {
        ExprMatrix::new(d, exprs.into_iter().map(Entry::new).collect())
    }

    pub fn zeros(d: usize) -> ExprMatrix {
        ExprMatrix { d, entries: vec![Entry::zero(); d * d] }
    }

    pub fn constant_diag(d: usize, v: f64) -> ExprMatrix {
        let mut m = ExprMatrix::zeros(d);
        for k in 0..d {
            m.entries[k * d + k] = Entry::new(Expr::Num(v));
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Row-major entry access.
    pub fn entry(&self, r: usize, c: usize) -> &Entry {
        &self.entries[r * self.d + c]
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.expr.is_real())
    }

    pub fn eval(&self, t: f64, rho: f64) -> Result<CMat> {
        let mut m = CMat::zeros(self.d, self.d);
        for r in 0..self.d {
            for c in 0..self.d {
                m[(r, c)] = self.entry(r, c).eval(t, rho)?;
            }
        }
        Ok(m)
    }
}

/// Coefficient values at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub w1: CMat,
    pub w2: CMat,
}

impl Coefficients {
    /// `P = [[-C, A*], [A, B]]`.
    pub fn p(&self) -> CMat {
        from_blocks(&(-&self.c), &self.a.adjoint(), &self.a, &self.b)
    }

    /// `W = diag(W1, W2)`.
    pub fn w(&self) -> CMat {
        let d = self.a.nrows();
        from_blocks(&self.w1, &CMat::zeros(d, d), &CMat::zeros(d, d), &self.w2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    d: usize,
    a: ExprMatrix,
    b: ExprMatrix,
    c: ExprMatrix,
    w1: ExprMatrix,
    w2: ExprMatrix,
}

impl CoefficientField {
    /// Unvalidated field; see [`build_coefficients`].
    pub fn new(a: ExprMatrix, b: ExprMatrix, c: ExprMatrix, w1: ExprMatrix, w2: ExprMatrix) -> Result<CoefficientField> {
        let d = a.dim();
        for (name, m) in [("B", &b), ("C", &c), ("W1", &w1), ("W2", &w2)] {
            if m.dim() != d {
                return Err(Error::Dimension(format!("{name} is {}x{0}, expected {d}x{d}", m.dim())));
            }
        }
        if d == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        Ok(CoefficientField { d, a, b, c, w1, w2 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// True when `P` and `W` contain no imaginary literal.
    pub fn is_real(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.w1, &self.w2].iter().all(|m| m.is_real())
    }

    /// Coefficients at `t` with graininess `nu`, so that `ρ(t) = t - nu`.
    pub fn at(&self, t: f64, nu: f64) -> Result<Coefficients> {
        let rho = t - nu;
        Ok(Coefficients {
            a: self.a.eval(t, rho)?,
            b: self.b.eval(t, rho)?,
            c: self.c.eval(t, rho)?,
            w1: self.w1.eval(t, rho)?,
            w2: self.w2.eval(t, rho)?,
        })
    }

    pub fn at_point(&self, ts: &TimeScale, t: f64) -> Result<Coefficients> {
        self.at(t, ts.jumps(t)?.nu)
    }

    pub fn p(&self, t: f64, nu: f64) -> Result<CMat> {
        Ok(self.at(t, nu)?.p())
    }

    pub fn w(&self, t: f64, nu: f64) -> Result<CMat> {
        Ok(self.at(t, nu)?.w())
    }

    /// Check the field assumptions at one point.
    pub fn validate_at(&self, t: f64, nu: f64) -> Result<()> {
        let co = self.at(t, nu)?;
        for (block, m) in [("B", &co.b), ("C", &co.c), ("W1", &co.w1), ("W2", &co.w2)] {
            let deviation = hermitian_defect(m);
            if deviation > FIELD_TOL {
                return Err(Error::NotHermitian { block, t, deviation });
            }
        }
        for (block, m) in [("W1", &co.w1), ("W2", &co.w2)] {
            let min = min_eig(m);
            if min < -FIELD_TOL {
                return Err(Error::IndefiniteWeight { block, t, min_eig: min });
            }
        }
        if nu > 0.0 {
            let shift = CMat::identity(self.d, self.d) - co.a.scale(nu);
            if singular(&shift) {
                return Err(Error::SingularShift { t });
            }
        }
        Ok(())
    }
}

fn singular(m: &CMat) -> bool {
    let s = crate::linalg::singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    smax == 0.0 || s.last().copied().unwrap_or(0.0) <= 1e-14 * smax
}

/// Build and validate a field at every point of `sample_grid`.
pub fn build_coefficients(
    a: ExprMatrix,
    b: ExprMatrix,
    c: ExprMatrix,
    w1: ExprMatrix,
    w2: ExprMatrix,
    sample_grid: &Grid,
) -> Result<CoefficientField> {
    let field = CoefficientField::new(a, b, c, w1, w2)?;
    for p in sample_grid.points() {
        field.validate_at(p.t, p.nu)?;
    }
    Ok(field)
}

/// Reduction of the scalar equation of order `2n` with coefficients `p_0, …, p_n`.
///
/// `A` is the strictly upper shift, `B = diag(0, …, 0, 1/p_n^ρ)` and
/// `C = diag(p_0, p_1^ρ, …, p_{n-1}^ρ)`. The spectral parameter multiplies
/// `weight · y`, so `W1 = diag(weight, 0, …, 0)` and `W2 = 0`.
pub fn from_sturm_liouville(p: Vec<Expr>, weight: Expr, sample_grid: &Grid) -> Result<CoefficientField> {
    if p.len() < 2 {
        return Err(Error::Dimension(format!("need p_0..p_n with n >= 1, got {} coefficients", p.len())));
    }
    let n = p.len() - 1;
    let mut a = ExprMatrix::zeros(n);
    for k in 0..n.saturating_sub(1) {
        a.entries[k * n + k + 1] = Entry::new(Expr::Num(1.0));
    }
    let mut b = ExprMatrix::zeros(n);
    b.entries[n * n - 1] =
        Entry::shifted(Expr::Div(Box::new(Expr::Num(1.0)), Box::new(p[n].clone())));
    let mut c = ExprMatrix::zeros(n);
    for k in 0..n {
        c.entries[k * n + k] = if k == 0 { Entry::new(p[0].clone()) } else { Entry::shifted(p[k].clone()) };
    }
    let mut w1 = ExprMatrix::zeros(n);
    w1.entries[0] = Entry::new(weight);
    let w2 = ExprMatrix::zeros(n);
    for pt in sample_grid.points() {
        let v = p[n].eval(pt.t - pt.nu)?;
        if v.norm() == 0.0 {
            return Err(Error::VanishingLeadingCoefficient { t: pt.t });
        }
    }
    build_coefficients(a, b, c, w1, w2, sample_grid)
}

/// Extract the `d×d` block `(r, c)` of a `2d×2d` matrix.
pub fn quarter(m: &CMat, r: usize, c: usize) -> CMat {
    let d = m.nrows() / 2;
    block(m, r * d, c * d, d, d)
}
