//! Cholesky factorization and SPD solves.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Fails with a singularity error when a pivot is not strictly positive.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    a.require_symmetric()?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Singular(format!(
                        "Cholesky pivot {s:.3e} at row {i}; matrix is not positive definite \
                         (consider adding diagonal jitter)"
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves a x = b for SPD a and (multi-column) right-hand side b.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "solve_spd: a is {}x{}, b has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    let l = cholesky(a)?;
    let n = a.rows();
    let m = b.cols();
    let mut x = b.clone();
    // forward: L y = b
    for col in 0..m {
        for i in 0..n {
            let mut s = x.get(i, col);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    // backward: L^T x = y
    for col in 0..m {
        for i in (0..n).rev() {
            let mut s = x.get(i, col);
            for k in (i + 1)..n {
                s -= l.get(k, i) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Convenience: solves a x = b for a vector right-hand side.
pub fn solve_spd_vec(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_spd(a, &Matrix::column(b))?.into_vec())
}
