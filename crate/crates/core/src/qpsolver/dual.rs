//! Goldfarb–Idnani dual active-set method.
//!
//! Starts from the unconstrained minimizer and adds violated constraints one
//! at a time, dropping active inequalities whose multiplier would turn
//! negative. Every iterate is dual feasible, so the objective never decreases.
//! Equalities enter first and are never dropped; a linearly dependent
//! equality is skipped when it is already satisfied.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_kkt, QpError, QpProblem, QpSolution, QpStatus, Side, INF};

/// Rows to try first, in order, before the most-violated rule takes over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub active: Vec<(usize, Side)>,
}

/// Reusable solver. Holds only the optional objective trace.
#[derive(Debug, Default)]
pub struct QpSolver {
    trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Constraint {
    row: usize,
    side: Side,
    /// Normal `n` of `nᵀx ≥ b`.
    n: DVector<f64>,
    b: f64,
    /// `L⁻¹n`.
    d: DVector<f64>,
    tol: f64,
}

#[derive(Debug, Clone)]
struct Active {
    c: Constraint,
    u: f64,
}

enum Added {
    Yes,
    Infeasible(Vec<usize>),
    Capped,
}

impl Added {
    fn stop(self) -> Option<(QpStatus, Vec<usize>)> {
        match self {
            Added::Yes => None,
            Added::Infeasible(cert) => Some((QpStatus::Infeasible, cert)),
            Added::Capped => Some((QpStatus::MaxIterations, Vec::new())),
        }
    }
}

struct Run<'a> {
    p: &'a QpProblem,
    l: DMatrix<f64>,
    x: DVector<f64>,
    active: Vec<Active>,
    iterations: usize,
    cap: usize,
    trace: Option<&'a mut Vec<f64>>,
}

const DEPENDENT: f64 = 1e-10;

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the objective after every primal step of subsequent solves.
    pub fn with_trace() -> Self {
        Self { trace: Some(Vec::new()) }
    }

    /// Objective values of the last solve, starting with the unconstrained
    /// minimum. Empty unless built with [`QpSolver::with_trace`].
    pub fn trace(&self) -> &[f64] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn solve(&mut self, p: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
        p.validate()?;
        let m = p.vars();
        let c = p.rows();
        if let Some(w) = warm {
            if let Some(&(row, _)) = w.active.iter().find(|(r, _)| *r >= c) {
                return Err(QpError::DimensionMismatch { what: "warm start row", expected: c, found: row });
            }
        }
        let (chol, regularization) = factor(&p.h).ok_or(QpError::NotConvex)?;
        let l = chol.l();
        let x = -chol.solve(&p.g);
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        let mut run = Run { p, l, x, active: Vec::new(), iterations: 0, cap: 10 * (m + c), trace: self.trace.as_mut() };
        run.record();

        let mut stop: Option<(QpStatus, Vec<usize>)> = None;
        'outer: {
            for row in (0..c).filter(|&i| p.is_equality(i)) {
                let mut con = run.constraint(row, Side::Both);
                if run.slack(&con) > 0.0 {
                    con.n.neg_mut();
                    con.d.neg_mut();
                    con.b = -con.b;
                }
                let (_, w) = run.directions(&con.d);
                if w.norm() <= DEPENDENT * con.d.norm().max(1.0) {
                    if run.slack(&con).abs() > con.tol {
                        stop = Some((QpStatus::Infeasible, run.certificate(row)));
                        break 'outer;
                    }
                    continue;
                }
                stop = run.add(con).stop();
                if stop.is_some() {
                    break 'outer;
                }
            }
            for &(row, side) in warm.map(|w| w.active.as_slice()).unwrap_or_default() {
                if side == Side::Both || p.is_equality(row) || run.is_active(row) {
                    continue;
                }
                let bound = if side == Side::Lower { p.lb[row] } else { p.ub[row] };
                if bound.abs() >= INF {
                    continue;
                }
                let con = run.constraint(row, side);
                if run.slack(&con) >= -con.tol {
                    continue;
                }
                stop = run.add(con).stop();
                if stop.is_some() {
                    break 'outer;
                }
            }
            while let Some(con) = run.most_violated() {
                stop = run.add(con).stop();
                if stop.is_some() {
                    break 'outer;
                }
            }
        }
        let (status, certificate) = stop.unwrap_or((QpStatus::Solved, Vec::new()));

        if status == QpStatus::Solved {
            run.polish();
        }
        let duals = run.duals();
        let kkt = check_kkt(p, &run.x, &duals)?;
        Ok(QpSolution {
            x: run.x,
            duals,
            active: run.active.iter().map(|a| (a.c.row, a.c.side)).collect(),
            status,
            iterations: run.iterations,
            kkt,
            certificate,
            regularization,
        })
    }
}

/// Cholesky of the symmetrized Hessian, shifted by `1e-9·tr(H)/m` if needed.
fn factor(h: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let sym = (h + h.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return Some((c, 0.0));
    }
    let m = sym.nrows().max(1) as f64;
    let eps = 1e-9 * sym.trace().abs().max(f64::MIN_POSITIVE) / m;
    let shifted = sym + DMatrix::identity(h.nrows(), h.ncols()) * eps;
    shifted.cholesky().map(|c| (c, eps))
}

impl Run<'_> {
    fn record(&mut self) {
        if let Some(t) = self.trace.as_mut() {
            t.push(self.p.objective(&self.x));
        }
    }

    fn constraint(&self, row: usize, side: Side) -> Constraint {
        let a = self.p.a.row(row).transpose();
        let (n, b) = match side {
            Side::Lower | Side::Both => (a, self.p.lb[row]),
            Side::Upper => (-a, -self.p.ub[row]),
        };
        let d = self.l.solve_lower_triangular(&n).expect("Cholesky factor is nonsingular");
        let tol = 1e-11 * (1.0 + b.abs() + n.amax() * self.x.amax());
        Constraint { row, side, n, b, d, tol }
    }

    fn slack(&self, c: &Constraint) -> f64 {
        c.n.dot(&self.x) - c.b
    }

    fn is_active(&self, row: usize) -> bool {
        self.active.iter().any(|a| a.c.row == row)
    }

    fn certificate(&self, row: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self.active.iter().map(|a| a.c.row).collect();
        rows.push(row);
        rows
    }

    /// `B = L⁻¹N` for the active normals, its thin QR factors.
    fn factor_active(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        if self.active.is_empty() {
            return None;
        }
        let m = self.p.vars();
        let b = DMatrix::from_fn(m, self.active.len(), |i, j| self.active[j].c.d[i]);
        let qr = b.qr();
        Some((qr.q(), qr.r()))
    }

    /// Dual step `r = R⁻¹Q₁ᵀd` and the component `w` of `d` orthogonal to the
    /// active normals; the primal step is `L⁻ᵀw`.
    fn directions(&self, d: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match self.factor_active() {
            None => (DVector::zeros(0), d.clone()),
            Some((q, r)) => {
                let qd = q.transpose() * d;
                let w = d - &q * &qd;
                let dual = r.solve_upper_triangular(&qd).unwrap_or_else(|| DVector::zeros(qd.len()));
                (dual, w)
            }
        }
    }

    fn most_violated(&self) -> Option<Constraint> {
        let ax = &self.p.a * &self.x;
        let mut best: Option<(usize, Side, f64)> = None;
        for i in 0..self.p.rows() {
            if self.p.is_equality(i) || self.is_active(i) {
                continue;
            }
            let scale = 1.0 + self.p.a.row(i).amax() * self.x.amax();
            let candidates =
                [(Side::Lower, self.p.lb[i], ax[i] - self.p.lb[i]), (Side::Upper, self.p.ub[i], self.p.ub[i] - ax[i])];
            for (side, bound, s) in candidates {
                if bound.abs() >= INF {
                    continue;
                }
                let tol = 1e-11 * (scale + bound.abs());
                if s < -tol && best.is_none_or(|(_, _, v)| s < v) {
                    best = Some((i, side, s));
                }
            }
        }
        best.map(|(i, side, _)| self.constraint(i, side))
    }

    fn add(&mut self, con: Constraint) -> Added {
        let mut up = 0.0;
        loop {
            self.iterations += 1;
            if self.iterations > self.cap {
                return Added::Capped;
            }
            let (r, w) = self.directions(&con.d);
            let z = self.l.tr_solve_lower_triangular(&w).expect("Cholesky factor is nonsingular");
            let dependent = w.norm() <= DEPENDENT * con.d.norm().max(1.0);

            let mut t1 = f64::INFINITY;
            let mut k = None;
            for (j, a) in self.active.iter().enumerate() {
                if a.c.side == Side::Both || r[j] <= 0.0 {
                    continue;
                }
                let ratio = a.u / r[j];
                if ratio < t1 {
                    t1 = ratio;
                    k = Some(j);
                }
            }
            let t2 = if dependent { f64::INFINITY } else { -self.slack(&con) / w.norm_squared() };

            if t1.is_infinite() && t2.is_infinite() {
                return Added::Infeasible(self.certificate(con.row));
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                self.x += &z * t;
            }
            for (j, a) in self.active.iter_mut().enumerate() {
                a.u -= t * r[j];
            }
            up += t;
            if t2.is_finite() {
                self.record();
            }
            if t2 <= t1 {
                self.active.push(Active { c: con, u: up });
                return Added::Yes;
            }
            let k = k.expect("finite partial step has a blocking row");
            self.active.remove(k);
        }
    }

    /// Re-solve the equality-constrained problem on the final active set to
    /// strip accumulated round-off; kept only if it does not hurt.
    fn polish(&mut self) {
        let Some((_, r)) = self.factor_active() else {
            return;
        };
        let e = self.l.solve_lower_triangular(&self.p.g).expect("Cholesky factor is nonsingular");
        let bmat = DMatrix::from_fn(self.p.vars(), self.active.len(), |i, j| self.active[j].c.d[i]);
        let rhs = DVector::from_fn(self.active.len(), |j, _| self.active[j].c.b) + bmat.transpose() * &e;
        let Some(y) = r.tr_solve_upper_triangular(&rhs) else { return };
        let Some(u) = r.solve_upper_triangular(&y) else { return };
        let Some(x) = self.l.tr_solve_lower_triangular(&(&bmat * &u - &e)) else { return };

        let before = check_kkt(self.p, &self.x, &self.duals()).map(|k| k.max()).unwrap_or(f64::INFINITY);
        let saved = (self.x.clone(), self.active.iter().map(|a| a.u).collect::<Vec<_>>());
        self.x = x;
        for (a, v) in self.active.iter_mut().zip(u.iter()) {
            a.u = *v;
        }
        let after = check_kkt(self.p, &self.x, &self.duals()).map(|k| k.max()).unwrap_or(f64::INFINITY);
        if !(after <= before) {
            self.x = saved.0;
            for (a, v) in self.active.iter_mut().zip(saved.1) {
                a.u = v;
            }
        }
    }

    fn duals(&self) -> DVector<f64> {
        let mut lam = DVector::zeros(self.p.rows());
        for a in &self.active {
            let row = a.c.row;
            lam[row] = match a.c.side {
                Side::Lower => a.u,
                Side::Upper => -a.u,
                // normal may have been flipped to make the row violated
                Side::Both => a.u * a.c.n.dot(&self.p.a.row(row).transpose()).signum(),
            };
        }
        lam
    }
}
