//! Published three-state example: plant, cone, linear gain, homogenization and
//! LMI weight, with the values quoted to four decimals where the source rounds.

use crate::numerics::{mat, vec_of, Matrix, Vector};

pub fn plant_a() -> Matrix {
    mat(&[&[3.0, 0.0, 1.0], &[0.0, -1.0, 1.0], &[-2.0, 0.0, 0.0]])
}

pub fn plant_b() -> Matrix {
    mat(&[&[1.0, -1.0], &[0.0, 1.0], &[0.0, 1.0]])
}

/// Rows `h1 = (1,0,1)`, `h2 = (0,1,-1)` (the safe set) and the virtual `h3 = (0,0,-1)`.
pub fn cone_rows() -> Matrix {
    mat(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, -1.0], &[0.0, 0.0, -1.0]])
}

/// The safe set: rows `h1`, `h2` only.
pub fn safe_rows() -> Matrix {
    mat(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, -1.0]])
}

pub fn gain_k() -> Matrix {
    mat(&[&[-4.7536, 0.0, -4.9393], &[1.7415, 0.0, -3.7856]])
}

pub fn g0() -> Matrix {
    mat(&[&[0.0, -0.5, 0.5], &[0.0, -0.5, 0.5], &[0.0, 0.5, -0.5]])
}

pub fn gain_k0() -> Matrix {
    mat(&[&[-1.0, 0.0, -1.0], &[1.0, 0.5, -0.5]])
}

pub fn weight_p() -> Matrix {
    mat(&[
        &[0.8707, 0.2572, -0.1918],
        &[0.2572, 1.0229, -0.3984],
        &[-0.1918, -0.3984, 0.9301],
    ])
}

/// `H(A+BK)H⁻¹` as printed (four decimals).
pub fn cone_closed_loop_printed() -> Matrix {
    mat(&[
        &[-3.7536, 0.0, 0.1857],
        &[2.0, -1.0, 2.0],
        &[0.2585, 0.0, -3.5271],
    ])
}

/// `H(-G0)H⁻¹` as printed.
pub fn cone_neg_g0_printed() -> Matrix {
    mat(&[&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.5, 0.0]])
}

pub const RHO: f64 = 4.0;
pub const MU: f64 = -0.75;

pub fn x0() -> Vector {
    vec_of(&[0.5, 1.0, 0.0])
}

pub fn issf_offset() -> Vector {
    vec_of(&[0.2, 1.0, 0.2])
}

/// `A + BK` with the published gain.
pub fn closed_loop_linear() -> Matrix {
    plant_a() + plant_b() * gain_k()
}

/// `I + μ G0` at the published degree.
pub fn generator() -> Matrix {
    Matrix::identity(3, 3) + g0() * MU
}
