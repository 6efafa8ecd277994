use super::{ensure_finite, ensure_square, Matrix};
use crate::error::{Error, Result};

const TAYLOR_ORDER: usize = 12;
// ||X||_1 bound after scaling; theta^13 / 13! stays below one ulp
const SCALED_NORM: f64 = 0.25;

/// `e^{sM}` by scaling and squaring around a degree-12 Taylor core.
pub fn expm(m: &Matrix, s: f64) -> Result<Matrix> {
    let n = ensure_square(m)?;
    ensure_finite(m, "expm input")?;
    if !s.is_finite() {
        return Err(Error::NonFinite("expm scale"));
    }
    if n == 0 || s == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let x = m * s;
    let norm = one_norm(&x);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let x = x * 0.5f64.powi(squarings);

    // Horner: I + X(I + X/2(I + X/3(...)))
    let id = Matrix::identity(n, n);
    let mut acc = id.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = &id + (&x * acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    if !acc.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("expm result (overflow)"));
    }
    Ok(acc)
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
