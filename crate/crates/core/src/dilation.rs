//! Linear dilations `d(s) = e^{sG}` and the canonical homogeneous norm they
//! induce from a weighted Euclidean norm `||x|| = sqrt(xᵀPx)`.

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, ensure_finite_vec, ensure_square, expm, eigen_real_parts, sym_eigen_min,
    weighted_norm, Matrix, Vector,
};
use crate::parallel::Exec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NORM_S_TOL: f64 = 1e-12;
const NEWTON_SWITCH: f64 = 1e-4;
const TINY_STATE: f64 = 1e-300;

/// A strictly monotone linear dilation together with its weight matrix.
#[derive(Debug, Clone)]
pub struct Dilation {
    generator: Matrix,
    weight: Matrix,
    monotonicity_margin: f64,
}

/// Result of the canonical-norm solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomNorm {
    pub value: f64,
    /// `ln(value)`; `-inf` at the origin.
    pub s_x: f64,
    pub iterations: usize,
}

impl Dilation {
    /// Validates that `generator` is anti-Hurwitz and that `P ≻ 0`,
    /// `PG + GᵀP ≻ 0`.
    pub fn new(generator: Matrix, weight: Matrix) -> Result<Self> {
        let n = ensure_square(&generator)?;
        if weight.shape() != (n, n) {
            return Err(Error::dim(
                "dilation weight",
                format!("{n}x{n}"),
                format!("{}x{}", weight.nrows(), weight.ncols()),
            ));
        }
        ensure_finite(&generator, "dilation generator")?;
        ensure_finite(&weight, "dilation weight")?;
        if (&weight - weight.transpose()).amax() > 1e-9 * weight.amax().max(1.0) {
            return Err(Error::InvalidDilation("weight P is not symmetric".into()));
        }
        let weight = (&weight + weight.transpose()) * 0.5;
        let min_re = eigen_real_parts(&generator)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_re <= 0.0 {
            return Err(Error::InvalidDilation(format!(
                "generator is not anti-Hurwitz (min real eigenvalue {min_re:.3e})"
            )));
        }
        if sym_eigen_min(&weight) <= 0.0 {
            return Err(Error::InvalidDilation("weight P is not positive definite".into()));
        }
        let monotonicity_margin = sym_eigen_min(&(&weight * &generator));
        if monotonicity_margin <= 0.0 {
            return Err(Error::InvalidDilation(format!(
                "PG + GᵀP is not positive definite (margin {monotonicity_margin:.3e})"
            )));
        }
        Ok(Dilation {
            generator,
            weight,
            monotonicity_margin,
        })
    }

    /// The standard dilation `e^s I` with `P = I`.
    pub fn standard(n: usize) -> Self {
        Dilation {
            generator: Matrix::identity(n, n),
            weight: Matrix::identity(n, n),
            monotonicity_margin: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    /// Smallest eigenvalue of `(PG + GᵀP)/2`.
    pub fn monotonicity_margin(&self) -> f64 {
        self.monotonicity_margin
    }

    pub fn matrix(&self, s: f64) -> Result<Matrix> {
        expm(&self.generator, s)
    }

    pub fn dilate(&self, s: f64, x: &Vector) -> Result<Vector> {
        self.check_vec(x)?;
        Ok(self.matrix(s)? * x)
    }

    /// `sqrt(xᵀPx)`.
    pub fn weighted_norm(&self, x: &Vector) -> f64 {
        weighted_norm(&self.weight, x)
    }

    fn check_vec(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim("state vector", self.dim(), x.len()));
        }
        ensure_finite_vec(x, "state vector")
    }

    /// Canonical homogeneous norm: `e^{s}` with `||d(-s)x|| = 1`.
    ///
    /// `s ↦ ||d(-s)x||` is strictly decreasing, so the root is bracketed by
    /// doubling steps around `ln ||x||`, narrowed by bisection and polished with
    /// safeguarded Newton steps.
    pub fn canonical_norm(&self, x: &Vector) -> Result<HomNorm> {
        self.check_vec(x)?;
        let r = self.weighted_norm(x);
        if r < TINY_STATE {
            return Ok(HomNorm {
                value: 0.0,
                s_x: f64::NEG_INFINITY,
                iterations: 0,
            });
        }
        // f(s) = ||d(-s)x||^2 - 1, decreasing in s
        let eval = |s: f64| -> Result<(f64, Vector)> {
            let y = expm(&self.generator, -s)? * x;
            Ok((y.dot(&(&self.weight * &y)) - 1.0, y))
        };

        let s0 = r.ln();
        let mut iterations = 0usize;
        let (f0, _) = eval(s0)?;
        iterations += 1;
        if f0 == 0.0 {
            return Ok(HomNorm {
                value: s0.exp(),
                s_x: s0,
                iterations,
            });
        }
        let (mut lo, mut hi);
        let mut step = 0.5;
        if f0 > 0.0 {
            lo = s0;
            hi = s0 + step;
            loop {
                iterations += 1;
                if eval(hi)?.0 <= 0.0 {
                    break;
                }
                lo = hi;
                step *= 2.0;
                hi += step;
                if step > 1e4 {
                    return Err(Error::NotConverged("canonical norm bracket"));
                }
            }
        } else {
            hi = s0;
            lo = s0 - step;
            loop {
                iterations += 1;
                if eval(lo)?.0 >= 0.0 {
                    break;
                }
                hi = lo;
                step *= 2.0;
                lo -= step;
                if step > 1e4 {
                    return Err(Error::NotConverged("canonical norm bracket"));
                }
            }
        }

        while hi - lo > NEWTON_SWITCH {
            let mid = 0.5 * (lo + hi);
            iterations += 1;
            if eval(mid)?.0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        let mut s = 0.5 * (lo + hi);
        for _ in 0..60 {
            iterations += 1;
            let (f, y) = eval(s)?;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            // d/ds ||d(-s)x||^2 = -2 yᵀ P G y
            let df = -2.0 * y.dot(&(&self.weight * (&self.generator * &y)));
            let mut next = s - f / df;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let delta = (next - s).abs();
            s = next;
            if delta <= NORM_S_TOL || hi - lo <= NORM_S_TOL {
                break;
            }
        }
        Ok(HomNorm {
            value: s.exp(),
            s_x: s,
            iterations,
        })
    }

    pub fn norm(&self, x: &Vector) -> Result<f64> {
        Ok(self.canonical_norm(x)?.value)
    }

    /// Gradient of `||x||_d` (as a column vector), from the implicit-function
    /// formula `||x||_d · yᵀ P d(-s) / (yᵀ P G y)` with `y = d(-s)x`.
    pub fn canonical_norm_gradient(&self, x: &Vector) -> Result<Vector> {
        let hn = self.canonical_norm(x)?;
        if hn.value == 0.0 {
            return Err(Error::AtOrigin("canonical norm gradient"));
        }
        let d = self.matrix(-hn.s_x)?;
        let y = &d * x;
        let denom = y.dot(&(&self.weight * (&self.generator * &y)));
        let row = (d.transpose() * (&self.weight * &y)) * (hn.value / denom);
        Ok(row)
    }

    /// `Ψ(x) = ||x||_d · d(-ln ||x||_d) x`, with `Ψ(0) = 0`.
    pub fn psi(&self, x: &Vector) -> Result<Vector> {
        let hn = self.canonical_norm(x)?;
        if hn.value == 0.0 {
            return Ok(Vector::zeros(x.len()));
        }
        Ok(self.matrix(-hn.s_x)? * x * hn.value)
    }

    /// `Ψ⁻¹(z) = ||z||⁻¹ d(ln ||z||) z`, with `Ψ⁻¹(0) = 0`.
    pub fn psi_inverse(&self, z: &Vector) -> Result<Vector> {
        self.check_vec(z)?;
        let r = self.weighted_norm(z);
        if r < TINY_STATE {
            return Ok(Vector::zeros(z.len()));
        }
        Ok(self.matrix(r.ln())? * z / r)
    }

    /// Homogeneous addition `Ψ⁻¹(Ψ(x) + Ψ(y))`.
    pub fn hom_add(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.psi_inverse(&(self.psi(x)? + self.psi(y)?))
    }

    /// Random point on the weighted unit sphere.
    pub fn random_unit(&self, rng: &mut impl Rng) -> Vector {
        loop {
            let v = Vector::from_fn(self.dim(), |_, _| rng.random_range(-1.0..1.0));
            let r = self.weighted_norm(&v);
            if r > 1e-3 {
                return v / r;
            }
        }
    }
}

/// Worst relative defect of `g(d(s)x) = e^{μs} d(s) g(x)` over sampled unit
/// vectors and a grid of `s` in `[-2, 2]`.
#[derive(Debug, Clone)]
pub struct HomogeneityReport {
    pub margin: f64,
    pub worst_point: Vector,
    pub worst_s: f64,
    pub samples: usize,
    pub pass: bool,
}

pub const HOMOGENEITY_TOL: f64 = 1e-8;

pub fn check_field_homogeneity<F>(
    field: F,
    dil: &Dilation,
    degree: f64,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<HomogeneityReport>
where
    F: Fn(&Vector) -> Result<Vector> + Sync + Send,
{
    let s_grid: Vec<f64> = (0..=16).map(|k| -2.0 + 0.25 * k as f64).collect();
    let per_sample = exec.map_range(samples, |k| -> Result<(f64, Vector, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let x = dil.random_unit(&mut rng);
        let gx = field(&x)?;
        let scale = 1.0 + gx.norm();
        let mut worst = (0.0, x.clone(), 0.0);
        for &s in &s_grid {
            let d = dil.matrix(s)?;
            let lhs = field(&(&d * &x))?;
            let rhs = &d * &gx * (degree * s).exp();
            let defect = (lhs - rhs).norm() / scale;
            if defect > worst.0 {
                worst = (defect, x.clone(), s);
            }
        }
        Ok(worst)
    });
    let mut best = (0.0, Vector::zeros(dil.dim()), 0.0);
    for r in per_sample {
        let r = r?;
        if r.0 > best.0 || best.1.is_empty() {
            best = r;
        }
    }
    Ok(HomogeneityReport {
        margin: best.0,
        worst_point: best.1,
        worst_s: best.2,
        samples,
        pass: best.0 <= HOMOGENEITY_TOL,
    })
}
