//! Small dense helpers shared by the geometry and cost modules.

use nalgebra::{DMatrix, DVector};

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `a x = b` for a square column-major `a`. Returns `None` when the
/// matrix is numerically singular.
pub(crate) fn solve_square(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    let m = DMatrix::from_column_slice(n, n, a);
    let scale = m.amax().max(1.0);
    let lu = m.full_piv_lu();
    // full pivoting puts the smallest pivot last
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * scale) {
        return None;
    }
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
}

/// Numerical rank with a relative singular-value cutoff.
pub(crate) fn rank(a: &[f64], rows: usize, cols: usize, rel_tol: f64) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_column_slice(rows, cols, a);
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |acc, s| acc.max(*s));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}
