//! Small dense-matrix helpers shared by the modules.

use crate::{Matrix, Vector};

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest entry of `|S - Sᵀ|`.
pub fn asymmetry(s: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..s.nrows() {
        for j in (i + 1)..s.ncols() {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(s: &Matrix) -> Matrix {
    (s + s.transpose()) * 0.5
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<'a>(values: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Column-wise argmax of a `K × n` score matrix.
pub fn argmax_columns(scores: &Matrix) -> alloc::vec::Vec<usize> {
    scores.column_iter().map(|c| argmax(c.iter())).collect()
}

/// Numerically stable softmax of one column of logits.
pub fn softmax(logits: &Vector) -> Vector {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|v| libm::exp(v - max));
    let total: f64 = out.iter().sum();
    out /= total;
    out
}

/// Off-diagonal Frobenius norm of a square matrix.
pub fn offdiag_norm(m: &Matrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    libm::sqrt(acc)
}

pub fn diagonal(m: &Matrix) -> alloc::vec::Vec<f64> {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).collect()
}
