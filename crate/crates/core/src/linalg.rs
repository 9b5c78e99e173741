//! Dense helpers on top of nalgebra: norms, LU solves with one refinement
//! step, triangular and anti-triangular substitution, condition numbers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Induced infinity norm: maximum absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 1-norm: maximum absolute column sum.
pub fn norm_1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `A X = B` by LU with one step of iterative refinement.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(Error::SingularSystem)?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}

pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve(a, &bm)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve(a, &DMatrix::identity(a.nrows(), a.ncols()))
}

/// Exact 1-norm condition number `‖A‖₁‖A⁻¹‖₁`; infinite when singular.
pub fn condition_1(a: &DMatrix<f64>) -> f64 {
    match inverse(a) {
        Ok(inv) => norm_1(a) * norm_1(&inv),
        Err(_) => f64::INFINITY,
    }
}

/// Back substitution for upper-triangular `A`.
pub fn solve_upper(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= a[(i, k)] * x[(k, c)];
            }
            let d = a[(i, i)];
            if d == 0.0 {
                return Err(Error::SingularSystem);
            }
            x[(i, c)] = s / d;
        }
    }
    Ok(x)
}

/// Solve `A X = B` when `A(i, j) = 0` for `i + j > n - 1`. Reversing the
/// column order of `A` makes it upper triangular.
pub fn solve_anti_upper(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let flipped = DMatrix::from_fn(n, n, |i, j| a[(i, n - 1 - j)]);
    let y = solve_upper(&flipped, b)?;
    Ok(DMatrix::from_fn(n, b.ncols(), |i, j| y[(n - 1 - i, j)]))
}

pub fn is_upper_triangular(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..i.min(a.ncols())).all(|j| a[(i, j)] == 0.0))
}

pub fn is_anti_upper(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i + j < n || a[(i, j)] == 0.0))
}

/// `trace(A^m)` for `m = 1..=m_max`.
pub fn power_traces(a: &DMatrix<f64>, m_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max);
    let mut pw = a.clone();
    for m in 1..=m_max {
        out.push(pw.trace());
        if m < m_max {
            pw = &pw * a;
        }
    }
    out
}
