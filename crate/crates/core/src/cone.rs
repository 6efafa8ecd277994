//! Homogeneous linear cones `{x : Hᵀ-rows · Ψ(x) ≥ 0}` and sampled margin
//! checks for invariance, ISS and ISSf of a closed loop on such a cone.
//!
//! The universally quantified conditions are checked on deterministic
//! low-discrepancy samples of the constraint slices. Every report carries the
//! worst margin and witness per constraint so that a failure is actionable.

use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::numerics::{
    condition_number, ensure_finite, ensure_finite_vec, inverse, lstsq_min_norm, null_space,
    Matrix, Vector,
};
use crate::parallel::Exec;
use crate::synthesis::HomogeneousController;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Absolute tolerance for "≥ 0" in every margin check.
pub const MARGIN_TOL: f64 = 1e-9;
const SLICE_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Constraint rows `h_iᵀ` stacked into `H` (p×n).
#[derive(Debug, Clone)]
pub struct ConeSpec {
    h: Matrix,
    labels: Vec<String>,
    inverse: Option<Matrix>,
    condition: Option<f64>,
}

impl ConeSpec {
    pub fn new(h: Matrix, labels: Option<Vec<String>>) -> Result<Self> {
        ensure_finite(&h, "cone rows")?;
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::InvalidInput("cone needs at least one row".into()));
        }
        for (i, row) in h.row_iter().enumerate() {
            if row.amax() == 0.0 {
                return Err(Error::InvalidInput(format!("cone row {} is zero", i + 1)));
            }
        }
        let labels = match labels {
            Some(l) if l.len() != h.nrows() => {
                return Err(Error::dim("cone labels", h.nrows(), l.len()));
            }
            Some(l) => l,
            None => (1..=h.nrows()).map(|i| format!("h{i}")).collect(),
        };
        let (inverse, condition) = if h.is_square() {
            let c = condition_number(&h);
            (inverse(&h, "cone rows").ok(), Some(c))
        } else {
            (None, None)
        };
        Ok(ConeSpec {
            h,
            labels,
            inverse,
            condition,
        })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of constraints.
    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn row(&self, i: usize) -> Vector {
        self.h.row(i).transpose()
    }

    /// Condition number of `H` when square.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    /// `H⁻¹`, or an error if `H` is not square and well conditioned.
    pub fn h_inv(&self) -> Result<&Matrix> {
        self.inverse.as_ref().ok_or(Error::Singular("cone rows H"))
    }

    /// `H M H⁻¹`.
    pub fn similarity(&self, m: &Matrix) -> Result<Matrix> {
        Ok(&self.h * m * self.h_inv()?)
    }

    fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::dim("cone state", self.n(), x.len()));
        }
        ensure_finite_vec(x, "cone state")
    }
}

/// `φ_i(x) = h_iᵀ Ψ(x)`.
pub fn barrier_values(cone: &ConeSpec, dil: &Dilation, x: &Vector) -> Result<Vector> {
    cone.check_state(x)?;
    Ok(cone.h() * dil.psi(x)?)
}

pub fn contains(cone: &ConeSpec, dil: &Dilation, x: &Vector) -> Result<bool> {
    Ok(barrier_values(cone, dil, x)?.iter().all(|&v| v >= -MARGIN_TOL))
}

/// Off-diagonal entries all `≥ -tol`.
pub fn is_metzler(m: &Matrix, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] >= -tol))
}

/// Sampling controls shared by the margin checks.
#[derive(Debug, Clone, Copy)]
pub struct Sampling {
    /// Target number of accepted points per slice.
    pub count: usize,
    /// Seed for the random shift applied to the Halton sequence.
    pub seed: u64,
    pub exec: Exec,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            count: 2048,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

/// Points of a constraint slice; `empty` marks an infeasible slice.
#[derive(Debug, Clone)]
pub struct XiSamples {
    pub points: Vec<Vector>,
    pub empty: bool,
}

struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim > PRIMES.len() {
            return Err(Error::InvalidInput(format!(
                "low-discrepancy sampling supports at most {} dimensions",
                PRIMES.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim)
            .map(|_| if seed == 0 { 0.0 } else { rng.random::<f64>() })
            .collect();
        Ok(Halton { shift, index: 0 })
    }

    fn next(&mut self) -> Vec<f64> {
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, b)| {
                let mut f = 1.0;
                let mut r = 0.0;
                let mut i = self.index;
                while i > 0 {
                    f /= b as f64;
                    r += f * (i % b) as f64;
                    i /= b;
                }
                let u = (r + s).fract();
                u.clamp(1e-12, 1.0 - 1e-12)
            })
            .collect()
    }

    /// Direction on the unit sphere of `R^dim` (Gaussian map of the next point).
    fn direction(&mut self, normal: &Normal) -> Vector {
        loop {
            let u = self.next();
            let g = Vector::from_iterator(u.len(), u.iter().map(|&ui| normal.inverse_cdf(ui)));
            let n = g.norm();
            if n > 1e-9 {
                return g / n;
            }
        }
    }
}

/// Affine slice `{z : C z = d}` written as `z_p + N w`.
struct Slice {
    particular: Vector,
    basis: Matrix,
}

fn slice(rows: &Matrix, rhs: &Vector) -> Result<Option<Slice>> {
    let particular = lstsq_min_norm(rows, rhs)?;
    if (rows * &particular - rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
        return Ok(None);
    }
    Ok(Some(Slice {
        particular,
        basis: null_space(rows, RANK_TOL),
    }))
}

/// Samples `Ξ_i` (`r = None`): `||z|| = 1`, `h_iᵀz = 0`, `h_jᵀz ≥ 0`; or the
/// affine slice `Ξ_i(r)`: `h_iᵀz + r_i = 0`, `h_jᵀz + r_j ≥ 0` with the free
/// part of `z` confined to radius `window`.
pub fn sample_xi(
    cone: &ConeSpec,
    dil: &Dilation,
    i: usize,
    r: Option<&Vector>,
    window: f64,
    opts: &Sampling,
) -> Result<XiSamples> {
    let (n, p) = (cone.n(), cone.p());
    if i >= p {
        return Err(Error::InvalidInput(format!(
            "constraint index {i} out of range (p = {p})"
        )));
    }
    if dil.dim() != n {
        return Err(Error::dim("dilation for cone", n, dil.dim()));
    }
    if let Some(r) = r {
        if r.len() != p {
            return Err(Error::dim("offset r", p, r.len()));
        }
        ensure_finite_vec(r, "offset r")?;
    }
    let offset = |j: usize| r.map_or(0.0, |r| r[j]);
    let normal = Normal::standard();
    let accept = |z: &Vector| {
        (0..p).all(|j| {
            j == i || cone.row(j).dot(z) + offset(j) >= -SLICE_TOL * cone.row(j).norm().max(1.0)
        })
    };
    let affine = r.is_some();

    // Each slice contributes points on its free directions; the sphere case
    // normalizes, the affine case scales by a log-spread radius.
    let mut points = Vec::new();
    let emit = |sl: &Slice, budget: usize, seed: u64, points: &mut Vec<Vector>| -> Result<()> {
        let k = sl.basis.ncols();
        let finish = |z: Vector| -> Option<Vector> {
            if affine {
                Some(z)
            } else {
                let w = dil.weighted_norm(&z);
                (w > 1e-12).then(|| z / w)
            }
        };
        if k == 0 {
            if affine && accept(&sl.particular) {
                points.push(sl.particular.clone());
            }
            return Ok(());
        }
        if k == 1 && !affine {
            for sign in [1.0, -1.0] {
                if let Some(z) = finish(sl.basis.column(0) * sign) {
                    if accept(&z) {
                        points.push(z);
                    }
                }
            }
            return Ok(());
        }
        let dims = if affine { k + 1 } else { k };
        let mut halton = Halton::new(dims, seed)?;
        let max_attempts = budget.saturating_mul(64).max(4096);
        let mut accepted = 0;
        for _ in 0..max_attempts {
            if accepted >= budget {
                break;
            }
            let z = if affine {
                let u = halton.next();
                let g = Vector::from_iterator(k, u[..k].iter().map(|&ui| normal.inverse_cdf(ui)));
                let gn = g.norm();
                if gn < 1e-9 {
                    continue;
                }
                let radius = window * 10f64.powf(-3.0 * (1.0 - u[k]));
                &sl.particular + &sl.basis * (g * (radius / gn))
            } else {
                &sl.basis * halton.direction(&normal)
            };
            if let Some(z) = finish(z) {
                if accept(&z) {
                    points.push(z);
                    accepted += 1;
                }
            }
        }
        Ok(())
    };

    let hi = cone.h().rows(i, 1).into_owned();
    let rhs_i = Vector::from_element(1, -offset(i));
    let Some(main) = slice(&hi, &rhs_i)? else {
        return Ok(XiSamples {
            points,
            empty: true,
        });
    };
    emit(&main, opts.count, opts.seed, &mut points)?;

    // Edge points where a second constraint is active.
    let edge_budget = (opts.count / (8 * p.max(2))).max(2);
    for j in (0..p).filter(|&j| j != i) {
        let mut rows = Matrix::zeros(2, n);
        rows.set_row(0, &cone.h().row(i));
        rows.set_row(1, &cone.h().row(j));
        let rhs = Vector::from_vec(vec![-offset(i), -offset(j)]);
        if let Some(sl) = slice(&rows, &rhs)? {
            emit(&sl, edge_budget, opts.seed.wrapping_add(1 + j as u64), &mut points)?;
        }
    }
    let empty = points.is_empty();
    Ok(XiSamples { points, empty })
}

/// Worst margin of one constraint.
#[derive(Debug, Clone)]
pub struct ConstraintMargin {
    pub index: usize,
    pub label: String,
    /// `+inf` when the slice is empty (vacuous condition).
    pub margin: f64,
    pub witness: Option<Vector>,
    pub samples: usize,
    /// Whether this constraint enters the verdict.
    pub required: bool,
}

#[derive(Debug, Clone)]
pub struct MarginReport {
    pub check: String,
    pub constraints: Vec<ConstraintMargin>,
    pub tolerance: f64,
    pub pass: bool,
}

impl MarginReport {
    fn new(check: &str, constraints: Vec<ConstraintMargin>) -> Self {
        let mut r = MarginReport {
            check: check.to_string(),
            constraints,
            tolerance: MARGIN_TOL,
            pass: true,
        };
        r.refresh();
        r
    }

    fn refresh(&mut self) {
        self.pass = self
            .constraints
            .iter()
            .filter(|c| c.required)
            .all(|c| c.margin > -self.tolerance);
    }

    /// Restricts the verdict to the given constraint indices (0-based).
    pub fn require_only(mut self, indices: &[usize]) -> Self {
        for c in &mut self.constraints {
            c.required = indices.contains(&c.index);
        }
        self.refresh();
        self
    }

    /// Worst required constraint.
    pub fn worst(&self) -> Option<&ConstraintMargin> {
        self.constraints
            .iter()
            .filter(|c| c.required)
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
    }

    pub fn worst_margin(&self) -> f64 {
        self.worst().map_or(f64::INFINITY, |c| c.margin)
    }

    pub fn total_samples(&self) -> usize {
        self.constraints.iter().map(|c| c.samples).sum()
    }
}

/// Right-hand factor of the tangency condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhsForm {
    /// `h_iᵀ G_d z`
    #[default]
    Generator,
    /// `h_iᵀ (G_d - I) z`
    Shifted,
}

fn tangency_margin(
    dil: &Dilation,
    h: &Vector,
    z: &Vector,
    gz: &Vector,
    form: RhsForm,
) -> Result<f64> {
    let p = dil.weight();
    let gd_z = dil.generator() * z;
    let denom = z.dot(&(p * &gd_z));
    if denom <= 0.0 {
        return Err(Error::InvalidDilation(format!(
            "zᵀPG_dz = {denom:.3e} ≤ 0 at a sample"
        )));
    }
    let factor = z.dot(&(p * gz)) / denom;
    let shifted = match form {
        RhsForm::Generator => h.dot(&gd_z),
        RhsForm::Shifted => h.dot(&gd_z) - h.dot(z),
    };
    Ok(h.dot(gz) - factor * shifted)
}

fn scan<F>(
    name: &str,
    cone: &ConeSpec,
    per_constraint: Vec<Vec<Vector>>,
    exec: Exec,
    eval: F,
) -> Result<MarginReport>
where
    F: Fn(usize, &Vector) -> Result<f64> + Sync + Send,
{
    let mut constraints = Vec::with_capacity(cone.p());
    for (i, pts) in per_constraint.into_iter().enumerate() {
        let vals = exec.try_map(&pts, |z| eval(i, z))?;
        let mut worst = (f64::INFINITY, None);
        for (v, z) in vals.into_iter().zip(&pts) {
            if v < worst.0 {
                worst = (v, Some(z.clone()));
            }
        }
        constraints.push(ConstraintMargin {
            index: i,
            label: cone.labels()[i].clone(),
            margin: worst.0,
            witness: worst.1,
            samples: pts.len(),
            required: true,
        });
    }
    Ok(MarginReport::new(name, constraints))
}

/// Sampled tangency condition on every `Ξ_i` for the field `g`.
pub fn invariance_margin<G>(
    field: G,
    dil: &Dilation,
    cone: &ConeSpec,
    form: RhsForm,
    opts: &Sampling,
) -> Result<MarginReport>
where
    G: Fn(&Vector) -> Result<Vector> + Sync + Send,
{
    let slices = (0..cone.p())
        .map(|i| sample_xi(cone, dil, i, None, 1.0, opts).map(|s| s.points))
        .collect::<Result<Vec<_>>>()?;
    scan("invariance", cone, slices, opts.exec, |i, z| {
        tangency_margin(dil, &cone.row(i), z, &field(z)?, form)
    })
}

/// Sampled tangency condition for a perturbed field `f(x, q)` over `Ξ_i` and a
/// grid of perturbation values.
pub fn iss_margin<F>(
    field: F,
    dil: &Dilation,
    cone: &ConeSpec,
    q_grid: &[Vector],
    form: RhsForm,
    opts: &Sampling,
) -> Result<MarginReport>
where
    F: Fn(&Vector, &Vector) -> Result<Vector> + Sync + Send,
{
    if q_grid.is_empty() {
        return Err(Error::InvalidInput("empty perturbation grid".into()));
    }
    let slices = (0..cone.p())
        .map(|i| sample_xi(cone, dil, i, None, 1.0, opts).map(|s| s.points))
        .collect::<Result<Vec<_>>>()?;
    scan("iss", cone, slices, opts.exec, |i, z| {
        let h = cone.row(i);
        let mut worst = f64::INFINITY;
        for q in q_grid {
            worst = worst.min(tangency_margin(dil, &h, z, &field(z, q)?, form)?);
        }
        Ok(worst)
    })
}

/// `γ̃(z) = -zᵀP(A+BK)z / zᵀPG_dz`.
pub fn gamma_tilde(ctrl: &HomogeneousController, z: &Vector) -> f64 {
    let p = ctrl.dilation().weight();
    let acl = ctrl.closed_loop_linear();
    -z.dot(&(p * (&acl * z))) / z.dot(&(p * (ctrl.dilation().generator() * z)))
}

/// `M(z) = H(A + BK + μγ̃(z)G0)H⁻¹`.
pub fn closed_loop_cone_matrix(
    ctrl: &HomogeneousController,
    cone: &ConeSpec,
    z: &Vector,
) -> Result<Matrix> {
    cone.check_state(z)?;
    if z.norm() == 0.0 {
        return Err(Error::AtOrigin("closed-loop cone matrix"));
    }
    let g = gamma_tilde(ctrl, z);
    cone.similarity(&(ctrl.closed_loop_linear() + ctrl.g0() * (ctrl.mu() * g)))
}

#[derive(Debug, Clone)]
pub struct IssfReport {
    pub sampled: MarginReport,
    /// `-H(A+BK)H⁻¹ r`.
    pub static_certificate: Vector,
    pub static_pass: bool,
    pub window: f64,
}

impl IssfReport {
    pub fn pass(&self) -> bool {
        self.sampled.pass && self.static_pass
    }
}

/// Sampled `-e_iᵀ M(z/||z||) r` over the affine slices `Ξ_i(r)`, with window
/// `100·max r`, plus the static certificate `-H(A+BK)H⁻¹ r`.
pub fn issf_check(
    ctrl: &HomogeneousController,
    cone: &ConeSpec,
    r: &Vector,
    opts: &Sampling,
) -> Result<IssfReport> {
    if r.len() != cone.p() {
        return Err(Error::dim("offset r", cone.p(), r.len()));
    }
    ensure_finite_vec(r, "offset r")?;
    if r.iter().any(|&ri| ri <= 0.0) {
        return Err(Error::InvalidInput("offset r must be strictly positive".into()));
    }
    let a_cone = cone.similarity(&ctrl.closed_loop_linear())?;
    let static_certificate = -(&a_cone * r);
    let static_pass = static_certificate.iter().all(|&v| v > 0.0);
    let window = 100.0 * r.max();
    let dil = ctrl.dilation();
    let mut slices = Vec::with_capacity(cone.p());
    for i in 0..cone.p() {
        let s = sample_xi(cone, dil, i, Some(r), window, opts)?;
        if s.empty {
            return Err(Error::Infeasible {
                stage: "issf sampling",
                detail: format!("slice for constraint {} is empty", i + 1),
            });
        }
        slices.push(s.points);
    }
    let sampled = scan("issf", cone, slices, opts.exec, |i, z| {
        let nz = z.norm();
        if nz < 1e-12 {
            return Ok(static_certificate[i]);
        }
        let m = closed_loop_cone_matrix(ctrl, cone, &(z / nz))?;
        Ok(-(m.row(i) * r)[0])
    })?;
    Ok(IssfReport {
        sampled,
        static_certificate,
        static_pass,
        window,
    })
}

#[derive(Debug, Clone)]
pub struct EmbeddingReport {
    /// Whether `H(-G0)H⁻¹` is Metzler (the inclusion is only claimed then).
    pub metzler: bool,
    pub checked: usize,
    pub counterexample: Option<Vector>,
    pub pass: bool,
}

/// Checks `{Hx ≥ 0, ||x|| ≤ 1} ⊂ Ω` on random samples when `H(-G0)H⁻¹` is
/// Metzler.
pub fn embedding_check(
    cone: &ConeSpec,
    dil: &Dilation,
    g0: &Matrix,
    opts: &Sampling,
) -> Result<EmbeddingReport> {
    let h_inv = cone.h_inv()?;
    if g0.shape() != (cone.n(), cone.n()) {
        return Err(Error::dim("G0 for embedding", cone.n(), g0.nrows()));
    }
    let metzler = is_metzler(&(cone.h() * (-g0) * h_inv), MARGIN_TOL);
    if !metzler {
        return Ok(EmbeddingReport {
            metzler,
            checked: 0,
            counterexample: None,
            pass: false,
        });
    }
    let n = cone.n();
    let bad = opts.exec.try_map(&(0..opts.count).collect::<Vec<_>>(), |&k| -> Result<Option<Vector>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut y = Vector::from_fn(n, |_, _| rng.random::<f64>());
        // a fraction of the samples lies on faces of the linear cone
        if k % 4 == 0 {
            y[k / 4 % n] = 0.0;
        }
        let x = h_inv * y;
        let w = dil.weighted_norm(&x);
        if w == 0.0 {
            return Ok(None);
        }
        let x = x * (rng.random::<f64>() / w);
        Ok((!contains(cone, dil, &x)?).then_some(x))
    })?;
    let counterexample = bad.into_iter().flatten().next();
    Ok(EmbeddingReport {
        metzler,
        checked: opts.count,
        pass: counterexample.is_none(),
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numerics::{mat, vec_of};
    use crate::synthesis::{HomogeneousController, LinearPlant};
    use proptest::prelude::*;
    use rand::Rng;

    fn dil() -> Dilation {
        Dilation::new(fixtures::generator(), fixtures::weight_p()).unwrap()
    }

    fn cone() -> ConeSpec {
        ConeSpec::new(fixtures::cone_rows(), None).unwrap()
    }

    fn ctrl_at(mu: f64) -> HomogeneousController {
        let plant = LinearPlant::new(fixtures::plant_a(), fixtures::plant_b()).unwrap();
        HomogeneousController::new(
            plant,
            fixtures::gain_k(),
            fixtures::gain_k0(),
            fixtures::g0(),
            mu,
            fixtures::weight_p(),
        )
        .unwrap()
    }

    fn opts(count: usize) -> Sampling {
        Sampling {
            count,
            ..Sampling::default()
        }
    }

    #[test]
    fn cone_spec_validation() {
        assert!(ConeSpec::new(mat(&[&[1.0, 0.0], &[0.0, 0.0]]), None).is_err());
        assert!(ConeSpec::new(Matrix::identity(2, 2), Some(vec!["a".into()])).is_err());
        let c = ConeSpec::new(mat(&[&[1.0, 1.0], &[1.0, 1.0]]), None).unwrap();
        assert!(c.h_inv().is_err());
        assert!(cone().condition().unwrap() < 10.0);
    }

    #[test]
    fn barrier_examples() {
        let (c, d) = (cone(), dil());
        assert_eq!(barrier_values(&c, &d, &Vector::zeros(3)).unwrap(), Vector::zeros(3));
        let std = Dilation::standard(3);
        let x = vec_of(&[0.4, -1.0, 2.0]);
        assert!((barrier_values(&c, &std, &x).unwrap() - c.h() * &x).amax() < 1e-12);
        let safe = ConeSpec::new(fixtures::safe_rows(), None).unwrap();
        assert!(contains(&c, &d, &Vector::zeros(3)).unwrap());
        assert!(contains(&safe, &d, &fixtures::x0()).unwrap());
        // x0 violates only the virtual row
        let phi = barrier_values(&c, &d, &fixtures::x0()).unwrap();
        assert!(phi[0] > 0.0 && phi[1] > 0.0 && phi[2] < 0.0);
        let out = vec_of(&[0.0, -1.0, 0.0]);
        assert!(barrier_values(&c, &d, &out).unwrap()[1] < 0.0);
        assert!(!contains(&safe, &d, &out).unwrap());
    }

    #[test]
    fn metzler_examples() {
        assert!(is_metzler(&Matrix::identity(3, 3), 1e-9));
        assert!(is_metzler(&fixtures::cone_closed_loop_printed(), 1e-9));
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = -1e-3;
        assert!(!is_metzler(&m, 1e-9));
        assert!(!is_metzler(&Matrix::zeros(2, 3), 1e-9));
    }

    #[test]
    fn xi_examples() {
        let std = Dilation::standard(2);
        let c2 = ConeSpec::new(Matrix::identity(2, 2), None).unwrap();
        let s = sample_xi(&c2, &std, 0, None, 1.0, &opts(64)).unwrap();
        assert!(!s.empty);
        for z in &s.points {
            assert!((z - vec_of(&[0.0, 1.0])).amax() < 1e-12);
        }

        let (c, d) = (cone(), dil());
        for i in 0..3 {
            let s = sample_xi(&c, &d, i, None, 1.0, &opts(512)).unwrap();
            assert!(s.points.len() >= 512, "{}", s.points.len());
            for z in &s.points {
                assert!((d.weighted_norm(z) - 1.0).abs() < 1e-12);
                assert!(c.row(i).dot(z).abs() <= 1e-12);
                for j in (0..3).filter(|&j| j != i) {
                    assert!(c.row(j).dot(z) >= -1e-12);
                }
            }
        }

        let bad = ConeSpec::new(mat(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]), None).unwrap();
        let s = sample_xi(&bad, &std, 0, None, 1.0, &opts(64)).unwrap();
        assert!(s.empty && s.points.is_empty());
    }

    #[test]
    fn affine_slice_samples() {
        let (c, d) = (cone(), dil());
        let r = fixtures::issf_offset();
        for i in 0..3 {
            let s = sample_xi(&c, &d, i, Some(&r), 20.0, &opts(256)).unwrap();
            assert!(!s.empty);
            for z in &s.points {
                assert!((c.row(i).dot(z) + r[i]).abs() < 1e-9);
                for j in (0..3).filter(|&j| j != i) {
                    assert!(c.row(j).dot(z) + r[j] >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn invariance_examples() {
        let (c, d) = (cone(), dil());
        let ctrl = ctrl_at(fixtures::MU);
        let rep = invariance_margin(|x| ctrl.closed_loop_field(x), &d, &c, RhsForm::Generator, &opts(2048))
            .unwrap();
        assert!(rep.pass, "{rep:?}");

        let std = Dilation::standard(3);
        let rep = invariance_margin(|x| Ok(-x), &std, &c, RhsForm::Generator, &opts(256)).unwrap();
        for cm in &rep.constraints {
            assert!(cm.margin.abs() < 1e-12);
        }

        let h1 = c.row(0);
        let rep =
            invariance_margin(move |_| Ok(-&h1), &std, &c, RhsForm::Generator, &opts(256)).unwrap();
        assert!(!rep.pass);
        assert!(rep.constraints[0].margin < -0.1);
        assert!(rep.worst().unwrap().witness.is_some());
    }

    #[test]
    fn both_rhs_forms_agree_on_slices() {
        let (c, d) = (cone(), dil());
        let ctrl = ctrl_at(fixtures::MU);
        let f = |x: &Vector| ctrl.closed_loop_field(x);
        let a = invariance_margin(f, &d, &c, RhsForm::Generator, &opts(512)).unwrap();
        let b = invariance_margin(f, &d, &c, RhsForm::Shifted, &opts(512)).unwrap();
        for (x, y) in a.constraints.iter().zip(&b.constraints) {
            assert!((x.margin - y.margin).abs() < 1e-12);
        }
    }

    #[test]
    fn iss_examples() {
        let (c, d) = (cone(), dil());
        let ctrl = ctrl_at(fixtures::MU);
        let grid: Vec<Vector> = (-4..=4).map(|k| vec_of(&[k as f64 / 4.0])).collect();
        let field = |x: &Vector, q: &Vector| -> Result<Vector> {
            let mut g = ctrl.closed_loop_field(x)?;
            g[0] += (q[0] * x[0]).abs().powf(0.125);
            Ok(g)
        };
        let rep = iss_margin(field, &d, &c, &grid, RhsForm::Generator, &opts(1024))
            .unwrap()
            .require_only(&[0, 1]);
        assert!(rep.pass, "{rep:?}");

        let zero = [Vector::zeros(1)];
        let plain = iss_margin(field, &d, &c, &zero, RhsForm::Generator, &opts(256)).unwrap();
        let nominal =
            invariance_margin(|x| ctrl.closed_loop_field(x), &d, &c, RhsForm::Generator, &opts(256))
                .unwrap();
        for (x, y) in plain.constraints.iter().zip(&nominal.constraints) {
            assert!((x.margin - y.margin).abs() < 1e-14);
        }

        let wrong = |x: &Vector, q: &Vector| -> Result<Vector> {
            let mut g = ctrl.closed_loop_field(x)?;
            g[0] -= q[0].abs();
            g[2] -= q[0].abs();
            Ok(g)
        };
        let rep = iss_margin(wrong, &d, &c, &grid, RhsForm::Generator, &opts(256)).unwrap();
        assert!(rep.constraints[0].margin < -0.5);
    }

    #[test]
    fn cone_matrix_examples() {
        let c = cone();
        let ctrl0 = ctrl_at(-1e-300);
        let z = vec_of(&[0.3, 0.2, -0.9]);
        let m = closed_loop_cone_matrix(&ctrl0, &c, &z).unwrap();
        let a_cone = c.similarity(&fixtures::closed_loop_linear()).unwrap();
        assert!((m - a_cone).amax() < 1e-12);

        let ctrl = ctrl_at(fixtures::MU);
        let d = ctrl.dilation().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let z = d.random_unit(&mut rng);
            assert!(gamma_tilde(&ctrl, &z) > 0.0);
            let m = closed_loop_cone_matrix(&ctrl, &c, &z).unwrap();
            assert!(is_metzler(&m, 1e-9), "{m}");
        }
    }

    #[test]
    fn cone_matrix_is_lipschitz_on_sphere() {
        let c = cone();
        let ctrl = ctrl_at(fixtures::MU);
        let d = ctrl.dilation().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut ratio: f64 = 0.0;
        for _ in 0..300 {
            let z1 = d.random_unit(&mut rng);
            let dz = Vector::from_fn(3, |_, _| rng.random_range(-1e-3..1e-3));
            let z2 = &z1 + dz;
            let z2 = &z2 / d.weighted_norm(&z2);
            let m1 = closed_loop_cone_matrix(&ctrl, &c, &z1).unwrap();
            let m2 = closed_loop_cone_matrix(&ctrl, &c, &z2).unwrap();
            ratio = ratio.max((m1 - m2).norm() / (z1 - z2).norm());
        }
        assert!(ratio.is_finite() && ratio < 100.0, "{ratio}");
    }

    #[test]
    fn issf_examples() {
        let c = cone();
        let r = fixtures::issf_offset();
        let ctrl = ctrl_at(fixtures::MU);
        let rep = issf_check(&ctrl, &c, &r, &opts(256)).unwrap();
        let expected = -(fixtures::cone_closed_loop_printed() * &r);
        assert!((&rep.static_certificate - &expected).amax() < 5e-4);
        assert!((expected - vec_of(&[0.7136, 0.2, 0.6537])).amax() < 1e-4);
        assert!(rep.static_pass);
        assert!(rep.sampled.constraints.iter().all(|m| m.samples > 0));

        assert!(issf_check(&ctrl, &c, &Vector::zeros(3), &opts(16)).is_err());

        // small degree: sampled margins approach the static certificate
        let near = issf_check(&ctrl_at(-0.05), &c, &r, &opts(512)).unwrap();
        let nearer = issf_check(&ctrl_at(-0.005), &c, &r, &opts(512)).unwrap();
        for i in 0..3 {
            let gap = |rep: &IssfReport| (rep.static_certificate[i] - rep.sampled.constraints[i].margin).abs();
            assert!(gap(&nearer) <= gap(&near) + 1e-12);
            assert!(gap(&nearer) < 0.05, "{}", gap(&nearer));
        }
        assert!(nearer.pass());
    }

    #[test]
    fn embedding_examples() {
        let c = cone();
        let std = Dilation::standard(3);
        let rep = embedding_check(&c, &std, &Matrix::zeros(3, 3), &opts(1000)).unwrap();
        assert!(rep.metzler && rep.pass);

        let d = dil();
        let g0 = fixtures::g0();
        assert!((c.h() * (-&g0) * c.h_inv().unwrap() - fixtures::cone_neg_g0_printed()).amax() < 1e-12);
        let rep = embedding_check(&c, &d, &g0, &opts(10_000)).unwrap();
        assert!(rep.metzler && rep.pass && rep.checked == 10_000);

        let x = c.h_inv().unwrap() * vec_of(&[0.3, 0.0, 0.5]);
        let x = &x * (0.5 / d.weighted_norm(&x));
        assert!(barrier_values(&c, &d, &x).unwrap().iter().all(|&v| v >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]
        #[test]
        fn left_eigenvector_sign_equivalence(v in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let d = dil();
            let x = Vector::from_vec(v);
            prop_assume!(x.norm() > 1e-3);
            let h1 = vec_of(&[1.0, 0.0, 1.0]);
            prop_assert!((h1.transpose() * d.generator() - h1.transpose()).amax() < 1e-15);
            let a = h1.dot(&d.psi(&x).unwrap());
            let b = h1.dot(&x);
            prop_assume!(b.abs() > 1e-9);
            prop_assert_eq!(a.signum(), b.signum());
        }

        #[test]
        fn cone_closed_under_hom_add_and_dilation(
            a in proptest::collection::vec(0.0f64..2.0, 3),
            b in proptest::collection::vec(0.0f64..2.0, 3),
            s in -3.0f64..3.0,
        ) {
            let (c, d) = (cone(), dil());
            // points of the cone: Ψ⁻¹ of points of the linear cone
            let h_inv = c.h_inv().unwrap();
            let x = d.psi_inverse(&(h_inv * Vector::from_vec(a))).unwrap();
            let y = d.psi_inverse(&(h_inv * Vector::from_vec(b))).unwrap();
            prop_assert!(contains(&c, &d, &x).unwrap() && contains(&c, &d, &y).unwrap());
            prop_assert!(contains(&c, &d, &d.hom_add(&x, &y).unwrap()).unwrap());
            prop_assert!(contains(&c, &d, &d.dilate(s, &x).unwrap()).unwrap());
        }
    }
}
