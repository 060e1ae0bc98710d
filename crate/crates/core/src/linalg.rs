//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorization; on failure retries once with
/// `1e-10 · trace / dim` added to the diagonal.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix to factorize has non-finite entries"));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let dim = m.nrows().max(1) as f64;
    let jitter = 1e-10 * m.trace().abs() / dim;
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).ok_or_else(|| Error::numerical("Cholesky factorization failed after jitter"))
}

/// `log |det|` of a symmetric positive definite matrix from its factor.
pub fn log_det_from_cholesky(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L x = b` for the lower factor of a Cholesky decomposition.
pub fn solve_lower(c: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let l = c.l();
    l.solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

/// Solves `Lᵀ x = b` for the lower factor of a Cholesky decomposition.
pub fn solve_upper_transposed(c: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let l = c.l();
    l.tr_solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal")
}

/// `(sign, log |det|)` via LU; `sign = 0` for singular input.
pub fn log_abs_det(m: &DMatrix<f64>) -> (f64, f64) {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut log = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        log += d.abs().ln();
        sign *= d.signum();
    }
    (sign, log)
}

/// Inverse of a square matrix, or a numerical error when singular.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("matrix is singular"))
}
