//! Dense linear-algebra and optimization substrate.

mod eigen;
mod expm;
mod lp;
mod lyapunov;

pub use eigen::{eigen_real_parts, max_real_part, sym_eigen_max, sym_eigen_min};
pub use expm::expm;
pub use lp::{lp_solve, LpOutcome, LpProblem};
pub use lyapunov::solve_lyapunov;

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Builds a matrix from row slices. Panics on ragged input; use
/// [`matrix_from_nested`] for untrusted data.
pub fn mat(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn vec_of(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

/// Validating constructor for nested row data (configuration files, artifacts).
pub fn matrix_from_nested(rows: &[Vec<f64>], what: &'static str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::InvalidInput(format!("{what} is empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::InvalidInput(format!(
            "{what}: row {} has {} entries, expected {c}",
            bad + 1,
            rows[bad].len()
        )));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m, what)?;
    Ok(m)
}

pub fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `M + Mᵀ`.
pub fn sym2(m: &Matrix) -> Matrix {
    m + m.transpose()
}

/// `sqrt(xᵀ P x)`.
pub fn weighted_norm(p: &Matrix, x: &Vector) -> f64 {
    x.dot(&(p * x)).max(0.0).sqrt()
}

/// Condition number in the 2-norm, `inf` for singular input.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn rank(m: &Matrix, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * scale).count()
}

/// Orthonormal basis of the null space of `m` (columns of the result).
pub fn null_space(m: &Matrix, tol: f64) -> Matrix {
    let n = m.ncols();
    // pad to at least n rows so the thin SVD yields the full right basis
    let padded = if m.nrows() < n {
        let mut p = Matrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let scale = svd.singular_values.max().max(1.0);
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol * scale)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `m x = b`.
pub fn lstsq_min_norm(m: &Matrix, b: &Vector) -> Result<Vector> {
    let svd = m.clone().svd(true, true);
    let scale = svd.singular_values.max().max(1.0);
    svd.solve(b, 1e-12 * scale)
        .map_err(|_| Error::NotConverged("least-squares SVD"))
}

pub fn inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    ensure_square(m)?;
    if condition_number(m) > 1e14 {
        return Err(Error::Singular(what));
    }
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Column-stacking `vec` operator.
pub fn vectorize(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_column_slice(rows, cols, v)
}
