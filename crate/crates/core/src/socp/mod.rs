//! Second-order cone programs in real variables.
//!
//! A [`ConeProgram`] maximizes `c^T x` subject to affine inequalities `a^T x <= b` and
//! second-order cone constraints `||A x + b|| <= c^T x + d`. Complex decision variables are
//! laid out as `[Re; Im]` by the callers (see [`ComplexLayout`]).

mod cone;
mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use ipm::solve;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineIneq {
    pub a: DVector<f64>,
    pub b: f64,
}

/// `||a x + b|| <= c^T x + d`
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    pub num_vars: usize,
    /// maximize objective^T x
    pub objective: DVector<f64>,
    pub affine: Vec<AffineIneq>,
    pub soc: Vec<SocConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Dual infeasible: the objective is unbounded above.
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective_value: f64,
    /// Upper bound on the optimum from the dual iterate (valid when `status` is optimal).
    pub dual_bound: f64,
    /// Multipliers for the stacked constraints (affine rows first, then each cone).
    /// When infeasible this is the normalized Farkas ray: `h^T z = -1`, `G^T z ~ 0`.
    pub dual: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-7, max_iter: 200 }
    }
}

impl ConeProgram {
    pub fn new(num_vars: usize) -> Self {
        ConeProgram {
            num_vars,
            objective: DVector::zeros(num_vars),
            affine: Vec::new(),
            soc: Vec::new(),
        }
    }

    pub fn add_affine(&mut self, a: DVector<f64>, b: f64) {
        self.affine.push(AffineIneq { a, b });
    }

    pub fn add_soc(&mut self, soc: SocConstraint) {
        self.soc.push(soc);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let bad = |what: String| Err(Error::MalformedProgram(what));
        if n == 0 {
            return bad("no variables".into());
        }
        if self.objective.len() != n {
            return bad(format!("objective has length {}, expected {n}", self.objective.len()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return bad("non-finite objective".into());
        }
        for (i, row) in self.affine.iter().enumerate() {
            if row.a.len() != n || !row.b.is_finite() || row.a.iter().any(|v| !v.is_finite()) {
                return bad(format!("affine row {i}"));
            }
        }
        for (i, s) in self.soc.iter().enumerate() {
            let ok = s.a.ncols() == n
                && s.a.nrows() == s.b.len()
                && s.c.len() == n
                && s.d.is_finite()
                && s.a.iter().chain(s.b.iter()).chain(s.c.iter()).all(|v| v.is_finite());
            if !ok {
                return bad(format!("cone {i}"));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x` (zero when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.affine {
            worst = worst.max(row.a.dot(x) - row.b);
        }
        for s in &self.soc {
            let lhs = (&s.a * x + &s.b).norm();
            worst = worst.max(lhs - (s.c.dot(x) + s.d));
        }
        worst
    }

    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x)
    }

    /// Text dump, one constraint per line, sparse `index:value` coefficients.
    pub fn dump(&self) -> String {
        fn sparse(v: impl Iterator<Item = f64>) -> String {
            let mut out = String::new();
            for (i, x) in v.enumerate().filter(|(_, x)| *x != 0.0) {
                let _ = write!(out, " {i}:{x:e}");
            }
            out
        }
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.num_vars);
        let _ = writeln!(out, "maximize{}", sparse(self.objective.iter().copied()));
        for row in &self.affine {
            let _ = writeln!(out, "affine{} <= {:e}", sparse(row.a.iter().copied()), row.b);
        }
        for s in &self.soc {
            let _ = write!(out, "soc rhs{} + {:e} |", sparse(s.c.iter().copied()), s.d);
            for r in 0..s.a.nrows() {
                let _ = write!(out, "{} + {:e};", sparse(s.a.row(r).iter().copied()), s.b[r]);
            }
            out.push('\n');
        }
        out
    }
}

/// Affine scalar `coef^T x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub coef: DVector<f64>,
    pub constant: f64,
}

/// Rotated-cone form of `||M x + m||^2 <= t`: `||[2(M x + m); t - 1]|| <= t + 1`.
pub fn lift_quadratic_bound(m_mat: &DMatrix<f64>, m_vec: &DVector<f64>, t: &AffineExpr) -> Result<SocConstraint> {
    let n = m_mat.ncols();
    if m_mat.nrows() != m_vec.len() || t.coef.len() != n {
        return Err(Error::MalformedProgram("quadratic bound operand shapes".into()));
    }
    if !t.constant.is_finite() || t.coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::MalformedProgram("bound is not a finite affine expression".into()));
    }
    let rows = m_mat.nrows();
    let mut a = DMatrix::zeros(rows + 1, n);
    let mut b = DVector::zeros(rows + 1);
    a.rows_mut(0, rows).copy_from(&(m_mat * 2.0));
    b.rows_mut(0, rows).copy_from(&(m_vec * 2.0));
    a.row_mut(rows).copy_from(&t.coef.transpose());
    b[rows] = t.constant - 1.0;
    Ok(SocConstraint { a, b, c: t.coef.clone(), d: t.constant + 1.0 })
}

/// Real layout of `len` complex variables starting at real offset 0: real parts occupy
/// `0..len`, imaginary parts `len..2 len`. Extra real variables follow at `2 len..`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexLayout {
    pub len: usize,
}

impl ComplexLayout {
    pub fn re(&self, j: usize) -> usize {
        j
    }

    pub fn im(&self, j: usize) -> usize {
        self.len + j
    }

    pub fn real_len(&self) -> usize {
        2 * self.len
    }

    /// Rows (Re f, Im f) of the complex linear map `f(w) = sum_j g_j w_{offset + j}`.
    pub fn linear_rows(&self, n: usize, offset: usize, g: &[Complex64]) -> (DVector<f64>, DVector<f64>) {
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for (j, gj) in g.iter().enumerate() {
            let v = offset + j;
            re[self.re(v)] += gj.re;
            re[self.im(v)] -= gj.im;
            im[self.re(v)] += gj.im;
            im[self.im(v)] += gj.re;
        }
        (re, im)
    }

    pub fn pack(&self, w: &[Complex64], n: usize) -> DVector<f64> {
        let mut x = DVector::zeros(n);
        for (j, z) in w.iter().enumerate() {
            x[self.re(j)] = z.re;
            x[self.im(j)] = z.im;
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> Vec<Complex64> {
        (0..self.len).map(|j| Complex64::new(x[self.re(j)], x[self.im(j)])).collect()
    }
}
