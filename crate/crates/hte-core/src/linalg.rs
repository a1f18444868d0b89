//! Small dense linear-algebra helpers for the closed-form learner paths.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solve `a x = b` for a symmetric positive-definite `a` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Structural("solve_spd: shape mismatch".into()));
    }
    // Lower-triangular factor, row-major.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Fit(format!(
                        "normal equations not positive definite (pivot {sum:.3e} at {i})"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(Array1::from(x))
}

#[cfg_attr(not(test), allow(dead_code))] // test-side oracle route
/// Solve `a x = b` by Gauss-Jordan elimination with partial pivoting.
/// Meant for small systems; used as an independent route from `solve_spd`.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Structural("solve_dense: shape mismatch".into()));
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() < 1e-12 {
            return Err(Error::Fit("singular system".into()));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            rhs.swap(col, pivot);
        }
        let diag = m[[col, col]];
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[[row, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[[row, j]] -= factor * m[[col, j]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    Ok(Array1::from_iter((0..n).map(|i| rhs[i] / m[[i, i]])))
}
