//! Small dense linear-algebra helpers: Cholesky factorization and inversion
//! of symmetric positive-definite matrices, and order-insensitive summation.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Score(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Score(format!(
                        "matrix not positive definite (pivot {} at row {})",
                        s, i
                    )));
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    // Invert L by forward substitution, column by column.
    let mut linv = Array2::<f64>::zeros((n, n));
    for col in 0..n {
        for row in col..n {
            let mut s = if row == col { 1.0 } else { 0.0 };
            for k in col..row {
                s -= l[(row, k)] * linv[(k, col)];
            }
            linv[(row, col)] = s / l[(row, row)];
        }
    }
    // A^-1 = L^-T L^-1.
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    Ok(inv)
}

/// Sum that is invariant to the order of the inputs: addends are sorted by
/// total order before accumulation, so any permutation of the same multiset
/// produces bitwise-identical results.
pub fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}
