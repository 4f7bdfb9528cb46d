//! Plain-text problem dump for replaying failed solves.
//!
//! ```text
//! qp <vars> <rows>
//! H
//! <vars lines of vars numbers>
//! g
//! <one line of vars numbers>
//! A
//! <rows lines of vars numbers>
//! lb
//! <one line of rows numbers>
//! ub
//! <one line of rows numbers>
//! ```
//!
//! Numbers use the shortest representation that parses back bit-exactly.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpProblem};

pub fn write_dump(p: &QpProblem) -> String {
    let mut out = String::new();
    let line = |out: &mut String, vals: &mut dyn Iterator<Item = f64>| {
        let parts: Vec<String> = vals.map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", parts.join(" "));
    };
    let _ = writeln!(out, "qp {} {}", p.vars(), p.rows());
    out.push_str("H\n");
    for r in 0..p.vars() {
        line(&mut out, &mut p.h.row(r).iter().copied());
    }
    out.push_str("g\n");
    line(&mut out, &mut p.g.iter().copied());
    out.push_str("A\n");
    for r in 0..p.rows() {
        line(&mut out, &mut p.a.row(r).iter().copied());
    }
    out.push_str("lb\n");
    line(&mut out, &mut p.lb.iter().copied());
    out.push_str("ub\n");
    line(&mut out, &mut p.ub.iter().copied());
    out
}

pub fn parse_dump(text: &str) -> Result<QpProblem, QpError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let err = |msg: &str| QpError::Parse(msg.to_string());

    let header = lines.next().ok_or_else(|| err("empty input"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("qp") {
        return Err(err("missing `qp` header"));
    }
    let mut dim =
        || -> Result<usize, QpError> { head.next().and_then(|t| t.parse().ok()).ok_or_else(|| err("bad dimensions")) };
    let (m, c) = (dim()?, dim()?);

    let mut numbers = |tag: &str, count: usize| -> Result<Vec<f64>, QpError> {
        if lines.next() != Some(tag) {
            return Err(QpError::Parse(format!("expected section `{tag}`")));
        }
        let mut vals = Vec::with_capacity(count);
        while vals.len() < count {
            let l = lines.next().ok_or_else(|| QpError::Parse(format!("section `{tag}` truncated")))?;
            for tok in l.split_whitespace() {
                vals.push(tok.parse::<f64>().map_err(|_| QpError::Parse(format!("bad number `{tok}`")))?);
            }
        }
        if vals.len() != count {
            return Err(QpError::Parse(format!("section `{tag}` has {} numbers, expected {count}", vals.len())));
        }
        Ok(vals)
    };
    let h = DMatrix::from_row_slice(m, m, &numbers("H", m * m)?);
    let g = DVector::from_vec(numbers("g", m)?);
    let a = DMatrix::from_row_slice(c, m, &numbers("A", c * m)?);
    let lb = DVector::from_vec(numbers("lb", c)?);
    let ub = DVector::from_vec(numbers("ub", c)?);
    QpProblem::new(h, g, a, lb, ub)
}
