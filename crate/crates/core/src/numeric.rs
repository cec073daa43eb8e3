//! Small numerical helpers shared by the estimators.

use crate::Matrix;

/// Neumaier-compensated sum; order-independent to well below 1e-12 for the
/// sample counts used here.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub(crate) fn compensated_mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// `log(sum(exp(x)))` with the maximum subtracted first. Entries equal to
/// `-inf` are skipped; an all `-inf` input yields `-inf`.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let tail = compensated_sum(values.iter().map(|&v| (v - max).exp()));
    max + tail.ln()
}

/// Logistic function evaluated without overflow for large `|x|`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Entrywise sum of matrices in the given order with per-entry compensation.
pub(crate) fn compensated_matrix_sum(terms: &[Matrix], nrows: usize, ncols: usize) -> Matrix {
    Matrix::from_fn(nrows, ncols, |i, j| {
        compensated_sum(terms.iter().map(|m| m[(i, j)]))
    })
}

/// `||A^T A - I||_F`.
pub(crate) fn orthonormality_error(m: &Matrix) -> f64 {
    let gram = m.transpose() * m;
    let p = gram.nrows();
    (gram - Matrix::identity(p, p)).norm()
}
