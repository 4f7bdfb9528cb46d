//! Dense strictly convex QP: `min ½xᵀHx + gᵀx  s.t.  lb ≤ Ax ≤ ub`.
//!
//! Rows with `lb == ub` are equalities. Bounds at or beyond [`INF`] in
//! magnitude are treated as absent.

mod dual;
mod dump;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use dual::{QpSolver, WarmStart};
pub use dump::{parse_dump, write_dump};

/// Bound sentinel for an absent side of a constraint row.
pub const INF: f64 = 1e19;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("row {0} has lb > ub")]
    InvertedBounds(usize),
    #[error("Hessian is not positive definite even after regularization")]
    NotConvex,
    #[error("malformed problem dump: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self, QpError> {
        let p = Self { h, g, a, lb, ub };
        p.validate()?;
        Ok(p)
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let m = g.len();
        Self::new(h, g, DMatrix::zeros(0, m), DVector::zeros(0), DVector::zeros(0))
    }

    /// Number of variables.
    pub fn vars(&self) -> usize {
        self.g.len()
    }

    /// Number of constraint rows.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let m = self.g.len();
        let c = self.a.nrows();
        let dims = [
            ("Hessian rows", m, self.h.nrows()),
            ("Hessian columns", m, self.h.ncols()),
            ("constraint columns", m, self.a.ncols()),
            ("lower bounds", c, self.lb.len()),
            ("upper bounds", c, self.ub.len()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(QpError::DimensionMismatch { what, expected, found });
            }
        }
        if !self.h.iter().all(|v| v.is_finite()) {
            return Err(QpError::NonFinite("H"));
        }
        if !self.g.iter().all(|v| v.is_finite()) {
            return Err(QpError::NonFinite("g"));
        }
        if !self.a.iter().all(|v| v.is_finite()) {
            return Err(QpError::NonFinite("A"));
        }
        if self.lb.iter().chain(self.ub.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        for i in 0..c {
            if self.lb[i] > self.ub[i] {
                return Err(QpError::InvertedBounds(i));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    pub fn is_equality(&self, row: usize) -> bool {
        self.lb[row] == self.ub[row]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
    MaxIterations,
}

/// Which side of a two-sided row holds with equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
    /// `lb == ub`.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// `‖Hx + g − Aᵀλ‖∞`.
    pub stationarity: f64,
    /// Largest bound violation.
    pub primal: f64,
    /// Largest `|λᵢ|·slackᵢ` on the side the multiplier acts on.
    pub complementarity: f64,
    /// Largest multiplier acting on an absent bound.
    pub dual: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per row: positive on an active lower bound, negative on
    /// an active upper bound, so that `Hx + g = Aᵀλ`.
    pub duals: DVector<f64>,
    pub active: Vec<(usize, Side)>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt: KktReport,
    /// Rows proving infeasibility: the active set plus the row that could not
    /// be added. Empty unless `status` is `Infeasible`.
    pub certificate: Vec<usize>,
    /// Diagonal shift added to H when its factorization failed.
    pub regularization: f64,
}

impl QpSolution {
    pub fn objective(&self, problem: &QpProblem) -> f64 {
        problem.objective(&self.x)
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart { active: self.active.clone() }
    }
}

/// Residuals of the KKT conditions at `(x, λ)`.
pub fn check_kkt(problem: &QpProblem, x: &DVector<f64>, duals: &DVector<f64>) -> Result<KktReport, QpError> {
    if x.len() != problem.vars() {
        return Err(QpError::DimensionMismatch { what: "x", expected: problem.vars(), found: x.len() });
    }
    if duals.len() != problem.rows() {
        return Err(QpError::DimensionMismatch { what: "duals", expected: problem.rows(), found: duals.len() });
    }
    let stat = &problem.h * x + &problem.g - problem.a.transpose() * duals;
    let ax = &problem.a * x;
    let mut report = KktReport { stationarity: stat.amax(), ..Default::default() };
    for i in 0..problem.rows() {
        let (lo, hi) = (problem.lb[i], problem.ub[i]);
        if lo > -INF {
            report.primal = report.primal.max(lo - ax[i]);
        }
        if hi < INF {
            report.primal = report.primal.max(ax[i] - hi);
        }
        let l = duals[i];
        if l > 0.0 {
            if lo <= -INF {
                report.dual = report.dual.max(l);
            } else {
                report.complementarity = report.complementarity.max(l * (ax[i] - lo).abs());
            }
        } else if l < 0.0 {
            if hi >= INF {
                report.dual = report.dual.max(-l);
            } else {
                report.complementarity = report.complementarity.max(-l * (hi - ax[i]).abs());
            }
        }
    }
    Ok(report)
}
