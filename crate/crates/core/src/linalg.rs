//! Small dense linear-algebra helpers shared by the prior and diffusion code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter: `1e-9 * trace / n`, floored at `1e-12`.
pub fn relative_jitter(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows().max(1) as f64;
    (1e-9 * cov.trace().abs() / n).max(1e-12)
}

/// Replace `m` by `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of `cov + jitter·I`.
///
/// On failure the smallest eigenvalue of `cov` is reported so callers can
/// tell how far from positive definite the matrix is.
pub fn jittered_cholesky(cov: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let mut shifted = cov.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += jitter;
    }
    match Cholesky::<f64, Dyn>::new(shifted) {
        Some(c) => Ok(c.unpack()),
        None => Err(Error::IllConditioned {
            min_eigenvalue: min_eigenvalue(cov),
            jitter,
        }),
    }
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    sym.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b)
        .expect("Cholesky factor has a zero on its diagonal")
}

/// Solve `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("Cholesky factor has a zero on its diagonal")
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
