//! Central-difference oracle for scalar functions of a matrix argument.
//!
//! Nothing here knows about densities or divergences: the oracle only probes
//! `f` at `W +/- step * E_ij`, so it stays independent of the analytic
//! gradient it is used to check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const DEFAULT_REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(row, col)` of the entry with the largest relative error.
    pub worst_entry: (usize, usize),
    pub fd_step: f64,
    pub n_entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Entry `(i, j)` is `(f(at + step E_ij) - f(at - step E_ij)) / (2 step)`.
pub fn central_difference<F>(f: F, at: &Matrix, step: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {step}")));
    }
    let (rows, cols) = at.shape();
    let mut probe = at.clone();
    let mut out = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + step;
            let plus = f(&probe);
            probe[(i, j)] = orig - step;
            let minus = f(&probe);
            probe[(i, j)] = orig;
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::NonFiniteProbe { row: i, col: j });
            }
            out[(i, j)] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Per entry `|a - n| / max(|a|, |n|, rel_floor)`; the report keeps the
/// maxima and the location of the worst relative error.
pub fn compare(analytic: &Matrix, numeric: &Matrix, rel_floor: f64) -> Result<GradCheckReport> {
    compare_with_step(analytic, numeric, rel_floor, f64::NAN)
}

/// [`compare`] that also records the step used to produce `numeric`.
pub fn compare_with_step(analytic: &Matrix, numeric: &Matrix, rel_floor: f64, fd_step: f64) -> Result<GradCheckReport> {
    if analytic.shape() != numeric.shape() {
        let (ar, ac) = analytic.shape();
        let (nr, nc) = numeric.shape();
        return Err(Error::InvalidInput(format!(
            "gradient shapes differ: {ar}x{ac} vs {nr}x{nc}"
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_entry: (0, 0),
        fd_step,
        n_entries: analytic.len(),
    };
    for j in 0..analytic.ncols() {
        for i in 0..analytic.nrows() {
            let (a, n) = (analytic[(i, j)], numeric[(i, j)]);
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(rel_floor);
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_entry = (i, j);
            }
        }
    }
    Ok(report)
}
