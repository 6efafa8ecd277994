use super::{ensure_finite, ensure_square, max_real_part, sym_eigen_min, vectorize, Matrix};
use crate::error::{Error, Result};

/// Solves `AᵀP + PA = -Q` by vectorization: `(I⊗Aᵀ + Aᵀ⊗I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    if q.shape() != (n, n) {
        return Err(Error::dim(
            "solve_lyapunov Q",
            format!("{n}x{n}"),
            format!("{}x{}", q.nrows(), q.ncols()),
        ));
    }
    ensure_finite(a, "Lyapunov A")?;
    ensure_finite(q, "Lyapunov Q")?;
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) || sym_eigen_min(q) <= 0.0 {
        return Err(Error::InvalidInput(
            "Lyapunov Q must be symmetric positive definite".into(),
        ));
    }
    let spectral = max_real_part(a)?;
    if spectral >= 0.0 {
        return Err(Error::NotHurwitz(spectral));
    }

    let id = Matrix::identity(n, n);
    let at = a.transpose();
    let op = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -vectorize(q);
    let sol = op.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov operator"))?;
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (a.transpose() * &p + &p * a + q).amax();
    if residual > 1e-9 * q.amax().max(1.0) {
        return Err(Error::NotConverged("Lyapunov solve (residual)"));
    }
    if sym_eigen_min(&p) <= 0.0 {
        return Err(Error::NotHurwitz(spectral));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mat;
    use proptest::prelude::*;

    #[test]
    fn negative_identity() {
        let p = solve_lyapunov(&(-Matrix::identity(3, 3)), &(Matrix::identity(3, 3) * 2.0))
            .unwrap();
        assert!((p - Matrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn decoupled() {
        let p = solve_lyapunov(&mat(&[&[-1.0, 0.0], &[0.0, -2.0]]), &Matrix::identity(2, 2))
            .unwrap();
        assert!((p - mat(&[&[0.5, 0.0], &[0.0, 0.25]])).amax() < 1e-14);
    }

    #[test]
    fn rejects_unstable() {
        let r = solve_lyapunov(&mat(&[&[1.0, 0.0], &[0.0, -1.0]]), &Matrix::identity(2, 2));
        assert!(matches!(r, Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn closed_loop_fixture_residual() {
        let acl = crate::fixtures::closed_loop_linear();
        let q = Matrix::identity(3, 3);
        let p = solve_lyapunov(&acl, &q).unwrap();
        let residual = (acl.transpose() * &p + &p * &acl + q).amax();
        assert!(residual < 1e-9);
    }

    proptest! {
        #[test]
        fn output_is_spd(entries in proptest::collection::vec(-1.0f64..1.0, 9)) {
            // shift to make A Hurwitz
            let mut a = Matrix::from_column_slice(3, 3, &entries);
            let shift = max_real_part(&a).unwrap() + 0.5;
            a -= Matrix::identity(3, 3) * shift.max(0.0);
            let p = solve_lyapunov(&a, &Matrix::identity(3, 3)).unwrap();
            prop_assert!((&p - p.transpose()).amax() < 1e-12);
            prop_assert!(sym_eigen_min(&p) > 0.0);
        }
    }
}
