//! Exhaustive active-set enumeration and random problem generation.
#![allow(dead_code)]

use jump_core::qpsolver::{QpProblem, INF};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Strictly convex problem feasible at a random point; roughly a quarter of
/// the rows are one-sided and a few are equalities.
pub fn random_problem(rng: &mut ChaCha8Rng, m: usize, c: usize) -> QpProblem {
    let q = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    let h = q.transpose() * q + DMatrix::identity(m, m) * 0.1;
    let g = DVector::from_fn(m, |_, _| rng.gen_range(-5.0..5.0));
    let a = DMatrix::from_fn(c, m, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let ax = &a * &x0;
    let mut lb = DVector::zeros(c);
    let mut ub = DVector::zeros(c);
    let eq_rows = if c > 2 && rng.gen_bool(0.3) { rng.gen_range(1..=2) } else { 0 };
    for i in 0..c {
        if i < eq_rows {
            lb[i] = ax[i];
            ub[i] = ax[i];
            continue;
        }
        lb[i] = ax[i] - rng.gen_range(0.0..1.0);
        ub[i] = ax[i] + rng.gen_range(0.0..1.0);
        match rng.gen_range(0..8) {
            0 => lb[i] = -INF,
            1 => ub[i] = INF,
            _ => {}
        }
    }
    QpProblem::new(h, g, a, lb, ub).unwrap()
}

/// Minimum objective over every choice of working set (each row inactive, at
/// its lower bound or at its upper bound) whose equality-constrained
/// minimizer is feasible. The true optimum is one of these candidates.
/// Equality rows may stay out of the set: more of them than variables can
/// still be consistent, and feasibility enforces them anyway.
pub fn enumerate_optimum(p: &QpProblem) -> Option<(f64, DVector<f64>)> {
    let m = p.vars();
    let c = p.rows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut choice = vec![0u8; c];
    loop {
        let rows: Vec<(usize, f64)> = (0..c)
            .filter_map(|i| match choice[i] {
                1 => Some((i, p.lb[i])),
                2 => Some((i, p.ub[i])),
                _ => None,
            })
            .collect();
        let skip = rows.len() > m
            || rows.iter().any(|&(_, b)| b.abs() >= INF)
            || (0..c).any(|i| p.is_equality(i) && choice[i] == 2);
        if !skip {
            if let Some(x) = equality_qp(p, &rows) {
                let ax = &p.a * &x;
                let feasible = (0..c).all(|i| ax[i] >= p.lb[i] - 1e-9 && ax[i] <= p.ub[i] + 1e-9);
                if feasible {
                    let f = p.objective(&x);
                    if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                        best = Some((f, x));
                    }
                }
            }
        }
        // odometer over {0,1,2}^c
        let mut k = 0;
        loop {
            if k == c {
                return best;
            }
            choice[k] += 1;
            if choice[k] == 3 {
                choice[k] = 0;
                k += 1;
            } else {
                break;
            }
        }
    }
}

fn equality_qp(p: &QpProblem, rows: &[(usize, f64)]) -> Option<DVector<f64>> {
    let m = p.vars();
    let k = rows.len();
    let mut kkt = DMatrix::zeros(m + k, m + k);
    let mut rhs = DVector::zeros(m + k);
    kkt.view_mut((0, 0), (m, m)).copy_from(&p.h);
    rhs.rows_mut(0, m).copy_from(&(-&p.g));
    for (j, &(i, b)) in rows.iter().enumerate() {
        for col in 0..m {
            kkt[(m + j, col)] = p.a[(i, col)];
            kkt[(col, m + j)] = p.a[(i, col)];
        }
        rhs[m + j] = b;
    }
    let lu = kkt.full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    Some(sol.rows(0, m).into_owned())
}
