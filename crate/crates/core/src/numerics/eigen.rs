use nalgebra::linalg::{Schur, SymmetricEigen};

use super::{ensure_finite, ensure_square, Matrix};
use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Real parts of all eigenvalues (any order), via real Schur / QR iteration.
pub fn eigen_real_parts(m: &Matrix) -> Result<Vec<f64>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "eigenvalue input")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::NotConverged("Schur QR iteration"))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.re).collect())
}

pub fn max_real_part(m: &Matrix) -> Result<f64> {
    Ok(eigen_real_parts(m)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn sym_eigen_min(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn sym_eigen_max(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.max()
}
