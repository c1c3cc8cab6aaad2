//! Dense symmetric positive-definite solves for the per-row ridge systems.

use crate::{Error, Result};

/// Solves `A x = b` in place for symmetric positive-definite `A`.
///
/// Only the lower triangle of the row-major `dim x dim` matrix is read; it is
/// overwritten with the Cholesky factor and `b` with the solution.
pub(crate) fn cholesky_solve(a: &mut [f64], b: &mut [f64], dim: usize) -> Result<()> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim);
    for j in 0..dim {
        let mut diag = a[j * dim + j];
        for k in 0..j {
            diag -= a[j * dim + k] * a[j * dim + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "normal-equations matrix is not positive definite (pivot {j})"
            )));
        }
        let diag = libm::sqrt(diag);
        a[j * dim + j] = diag;
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = s / diag;
        }
    }
    // L y = b
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * dim + k] * b[k];
        }
        b[i] = s / a[i * dim + i];
    }
    // L^T x = y
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in (i + 1)..dim {
            s -= a[k * dim + i] * b[k];
        }
        b[i] = s / a[i * dim + i];
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // [[4, 2], [2, 3]] x = [2, 1]  =>  x = [0.5, 0]
        let mut a = [4.0, 0.0, 2.0, 3.0];
        let mut b = [2.0, 1.0];
        cholesky_solve(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = [1.0, 0.0, 1.0, 1.0];
        let mut b = [1.0, 1.0];
        assert!(cholesky_solve(&mut a, &mut b, 2)
            .unwrap_err()
            .is_numerical());
    }
}
