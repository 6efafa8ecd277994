//! Controller design: a linear nonovershooting gain, its homogeneous upgrade,
//! the admissible degree range and the Lyapunov weight for the dilation.

use crate::cone::{self, ConeSpec, MarginReport, RhsForm, Sampling};
use crate::dilation::{check_field_homogeneity, Dilation, HomogeneityReport};
use crate::error::{Error, Result};
use crate::numerics::{
    condition_number, ensure_finite, ensure_finite_vec, lp_solve, lstsq_min_norm,
    null_space, rank, solve_lyapunov, sym_eigen_max, sym_eigen_min, vectorize, LpOutcome,
    LpProblem, Matrix, Vector,
};
use crate::parallel::Exec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lower bound standing in for the open constraint `ℓ_i > 0`.
pub const ELL_MIN: f64 = 1e-6;
const STALL_TOL: f64 = 1e-10;
const HOMOGENIZATION_TOL: f64 = 1e-9;
const MIN_RCOND: f64 = 1e-8;

/// A controllable pair `(A, B)`.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    a: Matrix,
    b: Matrix,
    controllability_rank: usize,
}

impl LinearPlant {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = crate::numerics::ensure_square(&a)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim(
                "input matrix B",
                format!("{n}xm"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        ensure_finite(&a, "plant A")?;
        ensure_finite(&b, "plant B")?;
        let m = b.ncols();
        let mut ctrb = Matrix::zeros(n, n * m);
        let mut blk = b.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = &a * blk;
        }
        let controllability_rank = rank(&ctrb, 1e-9);
        if controllability_rank < n {
            return Err(Error::InvalidInput(format!(
                "plant is not controllable (controllability rank {controllability_rank} < {n})"
            )));
        }
        Ok(LinearPlant {
            a,
            b,
            controllability_rank,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn controllability_rank(&self) -> usize {
        self.controllability_rank
    }

    fn check_gain(&self, k: &Matrix, what: &'static str) -> Result<()> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::dim(
                what,
                format!("{}x{}", self.m(), self.n()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        ensure_finite(k, what)
    }
}

#[derive(Debug, Clone)]
pub struct LinearSynthesisResult {
    pub k: Matrix,
    pub ell: Vector,
    /// `max_j ℓᵀ H(A+BK)H⁻¹ e_j`; negative on success.
    pub cost: f64,
    pub iterations: usize,
    /// `H(A+BK)H⁻¹`.
    pub cone_matrix: Matrix,
}

/// Cone-coordinate closed loop `H(A+BK)H⁻¹` as an affine function of `K`:
/// returns the constant part and, for each `(i, j)`, the coefficient row over
/// `vec_row(K)` (index `a·n + b`).
fn cone_affine(plant: &LinearPlant, cone: &ConeSpec) -> Result<(Matrix, Vec<Vec<f64>>)> {
    let h_inv = cone.h_inv()?;
    let (n, m) = (plant.n(), plant.m());
    let constant = cone.similarity(plant.a())?;
    let hb = cone.h() * plant.b();
    let mut coef = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut row = vec![0.0; m * n];
            for a in 0..m {
                for b in 0..n {
                    row[a * n + b] = hb[(i, a)] * h_inv[(b, j)];
                }
            }
            coef.push(row);
        }
    }
    Ok((constant, coef))
}

/// Alternating LP for a gain with `H(A+BK)H⁻¹` Metzler, diagonal `≥ -ρ`, and a
/// negative weighted column sum `max_j ℓᵀH(A+BK)H⁻¹e_j`.
pub fn synth_linear(
    plant: &LinearPlant,
    cone: &ConeSpec,
    rho: f64,
    max_iters: usize,
) -> Result<LinearSynthesisResult> {
    let n = plant.n();
    if cone.p() != n || cone.n() != n {
        return Err(Error::dim("cone for linear synthesis", format!("{n}x{n}"), format!("{}x{}", cone.p(), cone.n())));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let m = plant.m();
    let (c, coef) = cone_affine(plant, cone)?;
    let nk = m * n;

    let mut ell = Vector::from_element(n, 1.0);
    let mut best: Option<(Matrix, Vector, f64)> = None;
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        // K-step: variables vec_row(K), t
        let mut objective = vec![0.0; nk + 1];
        objective[nk] = 1.0;
        let mut lp = LpProblem::new(objective);
        for j in 0..n {
            let mut row = vec![0.0; nk + 1];
            let mut rhs = 0.0;
            for i in 0..n {
                for (r, cf) in row.iter_mut().zip(&coef[i * n + j]) {
                    *r += ell[i] * cf;
                }
                rhs -= ell[i] * c[(i, j)];
            }
            row[nk] = -1.0;
            lp.push_le(&row, rhs);
        }
        for i in 0..n {
            for j in 0..n {
                let mut row: Vec<f64> = coef[i * n + j].iter().map(|v| -v).collect();
                row.push(0.0);
                let rhs = if i == j { rho + c[(i, i)] } else { c[(i, j)] };
                lp.push_le(&row, rhs);
            }
        }
        let k = match lp_solve(&lp)? {
            LpOutcome::Optimal { x, .. } => Matrix::from_row_slice(m, n, &x[..nk]),
            LpOutcome::Infeasible => {
                return Err(Error::Infeasible {
                    stage: "linear synthesis",
                    detail: format!("no gain makes H(A+BK)H⁻¹ Metzler with diagonal ≥ -{rho}"),
                })
            }
            LpOutcome::Unbounded => {
                return Err(Error::Infeasible {
                    stage: "linear synthesis",
                    detail: "gain subproblem unbounded".into(),
                })
            }
        };

        // ℓ-step: variables ℓ, t
        let a_cone = cone.similarity(&(plant.a() + plant.b() * &k))?;
        let mut objective = vec![0.0; n + 1];
        objective[n] = 1.0;
        let mut lp = LpProblem::new(objective);
        for j in 0..n {
            let mut row: Vec<f64> = a_cone.column(j).iter().copied().collect();
            row.push(-1.0);
            lp.push_le(&row, 0.0);
        }
        for b in lp.bounds.iter_mut().take(n) {
            *b = (ELL_MIN, 1.0);
        }
        let (new_ell, cost) = match lp_solve(&lp)? {
            LpOutcome::Optimal { x, objective } => (Vector::from_column_slice(&x[..n]), objective),
            _ => {
                return Err(Error::Infeasible {
                    stage: "linear synthesis",
                    detail: "weight subproblem failed".into(),
                })
            }
        };
        ell = new_ell;
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((k, ell.clone(), cost));
        }
        if prev - cost < STALL_TOL {
            break;
        }
        prev = cost;
    }
    let (k, ell, cost) = best.expect("at least one iteration");
    let cone_matrix = cone.similarity(&(plant.a() + plant.b() * &k))?;
    if cost >= 0.0 {
        return Err(Error::Infeasible {
            stage: "linear synthesis",
            detail: format!("alternation stalled at cost {cost:.6e} ≥ 0 (gain {k})"),
        });
    }
    Ok(LinearSynthesisResult {
        k,
        ell,
        cost,
        iterations,
        cone_matrix,
    })
}

/// A solution `(G0, Y0)` of `AG0 - G0A + BY0 = A`, `G0B = 0`, and `K0 = Y0(G0 - I)⁻¹`.
#[derive(Debug, Clone)]
pub struct Homogenization {
    pub g0: Matrix,
    pub y0: Matrix,
    pub k0: Matrix,
    /// Max-abs residuals of the two equations.
    pub residual: (f64, f64),
}

impl Homogenization {
    /// Builds from given `G0`, `K0` with `Y0 = K0(G0 - I)`.
    pub fn from_parts(plant: &LinearPlant, g0: Matrix, k0: Matrix) -> Result<Self> {
        let n = plant.n();
        if g0.shape() != (n, n) {
            return Err(Error::dim("G0", format!("{n}x{n}"), format!("{}x{}", g0.nrows(), g0.ncols())));
        }
        ensure_finite(&g0, "G0")?;
        plant.check_gain(&k0, "K0")?;
        let y0 = &k0 * (&g0 - Matrix::identity(n, n));
        let residual = homogenization_residual(plant, &g0, &y0);
        Ok(Homogenization { g0, y0, k0, residual })
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.0.max(self.residual.1)
    }
}

/// `(|AG0 + BY0 - G0A - A|_max, |G0B|_max)`.
pub fn homogenization_residual(plant: &LinearPlant, g0: &Matrix, y0: &Matrix) -> (f64, f64) {
    let a = plant.a();
    let r1 = (a * g0 + plant.b() * y0 - g0 * a - a).amax();
    let r2 = (g0 * plant.b()).amax();
    (r1, r2)
}

/// Minimum-norm solution of the homogenization system.
pub fn solve_homogenization(plant: &LinearPlant) -> Result<Homogenization> {
    let (n, m) = (plant.n(), plant.m());
    let a = plant.a();
    let b = plant.b();
    let id = Matrix::identity(n, n);
    let ng = n * n;
    let nu = ng + m * n;
    let rows = n * n + n * m;
    let mut sys = Matrix::zeros(rows, nu);
    // vec(AG0 - G0A) = (I⊗A - Aᵀ⊗I) vec G0, vec(BY0) = (I⊗B) vec Y0
    sys.view_mut((0, 0), (ng, ng))
        .copy_from(&(id.kronecker(a) - a.transpose().kronecker(&id)));
    sys.view_mut((0, ng), (ng, m * n))
        .copy_from(&id.kronecker(b));
    // vec(G0B) = (Bᵀ⊗I) vec G0
    sys.view_mut((ng, 0), (n * m, ng))
        .copy_from(&b.transpose().kronecker(&id));
    let mut rhs = Vector::zeros(rows);
    rhs.rows_mut(0, ng).copy_from(&vectorize(a));

    let sol = lstsq_min_norm(&sys, &rhs)?;
    let split = |v: &Vector| {
        (
            Matrix::from_column_slice(n, n, &v.as_slice()[..ng]),
            Matrix::from_column_slice(m, n, &v.as_slice()[ng..]),
        )
    };
    let (mut g0, mut y0) = split(&sol);
    let res = homogenization_residual(plant, &g0, &y0);
    if res.0.max(res.1) > HOMOGENIZATION_TOL * (1.0 + a.amax()) {
        return Err(Error::Infeasible {
            stage: "homogenization",
            detail: format!("least-squares residual {:.3e}", res.0.max(res.1)),
        });
    }

    if 1.0 / condition_number(&(&g0 - &id)) < MIN_RCOND {
        let kernel = null_space(&sys, 1e-10);
        if kernel.ncols() == 0 {
            return Err(Error::Singular("G0 - I with a unique homogenization"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut scale = 1e-3;
        let mut fixed = false;
        for _ in 0..64 {
            let w = Vector::from_fn(kernel.ncols(), |_, _| rng.random_range(-1.0..1.0));
            let (g, y) = split(&(&sol + &kernel * w * scale));
            if 1.0 / condition_number(&(&g - &id)) >= MIN_RCOND {
                g0 = g;
                y0 = y;
                fixed = true;
                break;
            }
            scale *= 2.0;
        }
        if !fixed {
            return Err(Error::Singular("G0 - I after perturbation"));
        }
    }
    let k0 = &y0
        * (&g0 - &id)
            .try_inverse()
            .ok_or(Error::Singular("G0 - I"))?;
    let residual = homogenization_residual(plant, &g0, &y0);
    Ok(Homogenization { g0, y0, k0, residual })
}

/// Admissible homogeneity degrees for a given offset `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeRange {
    pub tau_min: f64,
    pub lo: f64,
    pub hi: f64,
    /// `[lo, 0)` for negative degrees, `(0, hi]` for positive ones.
    pub positive: bool,
}

impl DegreeRange {
    pub fn contains(&self, mu: f64) -> bool {
        if self.positive {
            mu > 0.0 && mu <= self.hi
        } else {
            mu >= self.lo && mu < 0.0
        }
    }
}

impl std::fmt::Display for DegreeRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.positive {
            write!(f, "(0, {}]", self.hi)
        } else {
            write!(f, "[{}, 0)", self.lo)
        }
    }
}

/// Smallest `τ ≥ 0` with `H(τ(A+BK) - G0)H⁻¹` Metzler, and the induced range
/// of degrees `[max(-1, -1/τ), 0)`. With `positive`, the sign of `G0` flips and
/// the range becomes `(0, min(1, 1/τ)]`.
pub fn metzler_offset_range(
    cone: &ConeSpec,
    k: &Matrix,
    g0: &Matrix,
    plant: &LinearPlant,
    positive: bool,
) -> Result<DegreeRange> {
    plant.check_gain(k, "gain K")?;
    let a = cone.similarity(&(plant.a() + plant.b() * k))?;
    let g = cone.similarity(g0)?;
    metzler_offset_from_cone(&a, &g, positive)
}

/// Same as [`metzler_offset_range`] on cone-coordinate matrices `a`, `g`.
pub fn metzler_offset_from_cone(a: &Matrix, g: &Matrix, positive: bool) -> Result<DegreeRange> {
    if !cone::is_metzler(a, cone::MARGIN_TOL) {
        return Err(Error::InvalidInput("H(A+BK)H⁻¹ is not Metzler".into()));
    }
    let sign = if positive { -1.0 } else { 1.0 };
    let mut tau: f64 = 0.0;
    let mut offending = Vec::new();
    for i in 0..a.nrows() {
        for j in (0..a.ncols()).filter(|&j| j != i) {
            let gij = sign * g[(i, j)];
            if gij <= cone::MARGIN_TOL {
                continue;
            }
            if a[(i, j)] > 0.0 {
                tau = tau.max(gij / a[(i, j)]);
            } else {
                offending.push(format!("({}, {}): a = {:.3e}, g = {:.3e}", i + 1, j + 1, a[(i, j)], gij));
            }
        }
    }
    if !offending.is_empty() {
        return Err(Error::Infeasible {
            stage: "degree range",
            detail: format!("no offset satisfies entries {}", offending.join("; ")),
        });
    }
    let inv = if tau == 0.0 { f64::INFINITY } else { 1.0 / tau };
    Ok(if positive {
        DegreeRange {
            tau_min: tau,
            lo: 0.0,
            hi: inv.min(1.0),
            positive,
        }
    } else {
        DegreeRange {
            tau_min: tau,
            lo: (-inv).max(-1.0),
            hi: 0.0,
            positive,
        }
    })
}

/// Eigenvalue margins of the weight conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiMargins {
    /// `λ_max(sym(P(A+BK)))`, must be `≤ -δ`.
    pub decay: f64,
    /// `λ_min(sym(P G_d))`, must be `≥ δ`.
    pub monotone: f64,
    /// `λ_min(P)`, must be `≥ δ`.
    pub positive: f64,
    pub delta: f64,
}

impl LmiMargins {
    pub fn compute(p: &Matrix, acl: &Matrix, gd: &Matrix) -> Self {
        let delta = 1e-6 * p.norm();
        LmiMargins {
            decay: sym_eigen_max(&(p * acl)),
            monotone: sym_eigen_min(&(p * gd)),
            positive: sym_eigen_min(p),
            delta,
        }
    }

    pub fn feasible(&self) -> bool {
        self.decay <= -self.delta && self.monotone >= self.delta && self.positive >= self.delta
    }

    /// Strict sign conditions only.
    pub fn strict(&self) -> bool {
        self.decay < 0.0 && self.monotone > 0.0 && self.positive > 0.0
    }

    fn violation(&self) -> f64 {
        (self.decay + self.delta)
            .max(self.delta - self.monotone)
            .max(self.delta - self.positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiSource {
    Lyapunov { candidate: usize },
    Subgradient { iterations: usize },
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub p: Matrix,
    pub margins: LmiMargins,
    pub source: LmiSource,
}

/// Finds `P` with `sym(P(A+BK)) ≺ 0`, `sym(P G_d) ≻ 0`, `P ≻ 0`.
pub fn solve_lmi_weight(
    plant: &LinearPlant,
    k: &Matrix,
    gd: &Matrix,
    cone: Option<&ConeSpec>,
) -> Result<LmiSolution> {
    plant.check_gain(k, "gain K")?;
    let n = plant.n();
    if gd.shape() != (n, n) {
        return Err(Error::dim("generator", n, gd.nrows()));
    }
    let acl = plant.a() + plant.b() * k;
    let id = Matrix::identity(n, n);
    let hth = cone.map(|c| c.h().transpose() * c.h());
    let mut family = vec![id.clone()];
    if let Some(hth) = &hth {
        family.push(hth.clone());
        for w in [0.25, 0.5, 0.75] {
            family.push(&id * w + hth * (1.0 - w));
        }
    }
    family.push(gd.transpose() * gd);
    family.push(sym(gd));

    let mut best: Option<(Matrix, LmiMargins)> = None;
    for (idx, q) in family.iter().enumerate() {
        if sym_eigen_min(q) <= 0.0 {
            continue;
        }
        let p = match solve_lyapunov(&acl, q) {
            Ok(p) => normalize(&p),
            Err(Error::NotHurwitz(v)) => return Err(Error::NotHurwitz(v)),
            Err(_) => continue,
        };
        let m = LmiMargins::compute(&p, &acl, gd);
        if m.feasible() {
            return Ok(LmiSolution {
                p,
                margins: m,
                source: LmiSource::Lyapunov { candidate: idx },
            });
        }
        if best.as_ref().is_none_or(|b| m.violation() < b.1.violation()) {
            best = Some((p, m));
        }
    }
    let start = best.map(|b| b.0).unwrap_or_else(|| id.clone() / n as f64);
    refine_lmi_weight(&acl, gd, &start, 20_000)
}

fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn normalize(p: &Matrix) -> Matrix {
    let p = sym(p);
    let tr = p.trace();
    p / tr
}

fn top_eigvec(m: &Matrix, largest: bool) -> (f64, Vector) {
    let eig = sym(m).symmetric_eigen();
    let mut idx = 0;
    for k in 1..eig.eigenvalues.len() {
        let better = if largest {
            eig.eigenvalues[k] > eig.eigenvalues[idx]
        } else {
            eig.eigenvalues[k] < eig.eigenvalues[idx]
        };
        if better {
            idx = k;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Projected subgradient descent on the largest weight-condition violation,
/// over symmetric matrices with unit trace.
pub fn refine_lmi_weight(acl: &Matrix, gd: &Matrix, start: &Matrix, iters: usize) -> Result<LmiSolution> {
    let n = acl.nrows();
    let id = Matrix::identity(n, n);
    let mut p = normalize(start);
    for it in 0..iters {
        let m = LmiMargins::compute(&p, acl, gd);
        if m.feasible() {
            return Ok(LmiSolution {
                p,
                margins: m,
                source: LmiSource::Subgradient { iterations: it },
            });
        }
        let d1 = m.decay + m.delta;
        let d2 = m.delta - m.monotone;
        let d3 = m.delta - m.positive;
        let grad = if d1 >= d2 && d1 >= d3 {
            let (_, v) = top_eigvec(&(&p * acl), true);
            sym(&(&v * (acl * &v).transpose()))
        } else if d2 >= d3 {
            let (_, v) = top_eigvec(&(&p * gd), false);
            -sym(&(&v * (gd * &v).transpose()))
        } else {
            let (_, v) = top_eigvec(&p, false);
            -(&v * v.transpose())
        };
        let gn = grad.norm();
        if gn == 0.0 {
            break;
        }
        let step = 0.05 / ((it + 1) as f64).sqrt();
        p -= grad * (step / gn);
        p = sym(&p);
        let shift = (p.trace() - 1.0) / n as f64;
        p -= &id * shift;
    }
    Err(Error::Infeasible {
        stage: "weight LMI",
        detail: "no feasible weight found; try a degree closer to 0".into(),
    })
}

/// The homogeneous feedback `u = K0x + ||x||_d^{1+μ}(K - K0)d(-ln||x||_d)x`.
#[derive(Debug, Clone)]
pub struct HomogeneousController {
    plant: LinearPlant,
    k: Matrix,
    k0: Matrix,
    g0: Matrix,
    y0: Matrix,
    mu: f64,
    dilation: Dilation,
}

impl HomogeneousController {
    /// `G_d = I + μG0` with weight `P`. Accepts `μ ∈ [-1, 1]`.
    pub fn new(
        plant: LinearPlant,
        k: Matrix,
        k0: Matrix,
        g0: Matrix,
        mu: f64,
        p: Matrix,
    ) -> Result<Self> {
        plant.check_gain(&k, "gain K")?;
        plant.check_gain(&k0, "gain K0")?;
        let n = plant.n();
        if g0.shape() != (n, n) {
            return Err(Error::dim("G0", n, g0.nrows()));
        }
        if !(-1.0..=1.0).contains(&mu) {
            return Err(Error::InvalidInput(format!("degree {mu} outside [-1, 1]")));
        }
        let gd = Matrix::identity(n, n) + &g0 * mu;
        let dilation = Dilation::new(gd, p)?;
        let y0 = &k0 * (&g0 - Matrix::identity(n, n));
        Ok(HomogeneousController {
            plant,
            k,
            k0,
            g0,
            y0,
            mu,
            dilation,
        })
    }

    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn k0(&self) -> &Matrix {
        &self.k0
    }

    pub fn g0(&self) -> &Matrix {
        &self.g0
    }

    pub fn y0(&self) -> &Matrix {
        &self.y0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dilation(&self) -> &Dilation {
        &self.dilation
    }

    /// `A + BK`.
    pub fn closed_loop_linear(&self) -> Matrix {
        self.plant.a() + self.plant.b() * &self.k
    }

    pub fn lmi_margins(&self) -> LmiMargins {
        LmiMargins::compute(
            self.dilation.weight(),
            &self.closed_loop_linear(),
            self.dilation.generator(),
        )
    }

    /// Homogeneous control; `u(0) = 0`.
    pub fn eval_control(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.plant.n() {
            return Err(Error::dim("controller state", self.plant.n(), x.len()));
        }
        ensure_finite_vec(x, "controller state")?;
        let hn = self.dilation.canonical_norm(x)?;
        if hn.value == 0.0 {
            return Ok(Vector::zeros(self.plant.m()));
        }
        let proj = self.dilation.matrix(-hn.s_x)? * x;
        let scale = ((1.0 + self.mu) * hn.s_x).exp();
        Ok(&self.k0 * x + (&self.k - &self.k0) * proj * scale)
    }

    /// Linear `Kx` outside the weighted unit ball, homogeneous inside.
    pub fn eval_mixed_control(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.plant.n() {
            return Err(Error::dim("controller state", self.plant.n(), x.len()));
        }
        if self.dilation.weighted_norm(x) >= 1.0 {
            ensure_finite_vec(x, "controller state")?;
            Ok(&self.k * x)
        } else {
            self.eval_control(x)
        }
    }

    /// `Ax + B u(x)`.
    pub fn closed_loop_field(&self, x: &Vector) -> Result<Vector> {
        Ok(self.plant.a() * x + self.plant.b() * self.eval_control(x)?)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub max_iters: usize,
    pub sampling: Sampling,
    pub positive_degree: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            max_iters: 50,
            sampling: Sampling::default(),
            positive_degree: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub linear: LinearSynthesisResult,
    pub homogenization: Homogenization,
    pub range: DegreeRange,
    pub lmi: LmiSolution,
    pub invariance: MarginReport,
    pub homogeneity: HomogeneityReport,
    pub embedding: cone::EmbeddingReport,
}

/// Linear gain, homogenization, degree range, weight, then the sampled checks.
pub fn full_pipeline(
    plant: &LinearPlant,
    cone: &ConeSpec,
    rho: f64,
    mu: f64,
    opts: &PipelineOptions,
) -> Result<(HomogeneousController, PipelineReport)> {
    let linear = synth_linear(plant, cone, rho, opts.max_iters)?;
    let homogenization = solve_homogenization(plant)?;
    let range = metzler_offset_range(cone, &linear.k, &homogenization.g0, plant, opts.positive_degree)?;
    if !range.contains(mu) {
        return Err(Error::InvalidInput(format!(
            "degree {mu} outside the admissible range {range}"
        )));
    }
    let n = plant.n();
    let gd = Matrix::identity(n, n) + &homogenization.g0 * mu;
    let lmi = solve_lmi_weight(plant, &linear.k, &gd, Some(cone))?;
    let ctrl = HomogeneousController::new(
        plant.clone(),
        linear.k.clone(),
        homogenization.k0.clone(),
        homogenization.g0.clone(),
        mu,
        lmi.p.clone(),
    )?;
    let invariance = cone::invariance_margin(
        |x| ctrl.closed_loop_field(x),
        ctrl.dilation(),
        cone,
        RhsForm::Generator,
        &opts.sampling,
    )?;
    let homogeneity = check_field_homogeneity(
        |x| ctrl.closed_loop_field(x),
        ctrl.dilation(),
        mu,
        opts.sampling.count.min(256),
        opts.sampling.seed,
        opts.sampling.exec,
    )?;
    let embedding = cone::embedding_check(cone, ctrl.dilation(), ctrl.g0(), &opts.sampling)?;
    let report = PipelineReport {
        linear,
        homogenization,
        range,
        lmi,
        invariance,
        homogeneity,
        embedding,
    };
    Ok((ctrl, report))
}

/// Controllers at several degrees, evaluated independently.
pub fn scan_degrees(
    plant: &LinearPlant,
    cone: &ConeSpec,
    rho: f64,
    mus: &[f64],
    opts: &PipelineOptions,
    exec: Exec,
) -> Vec<Result<(HomogeneousController, PipelineReport)>> {
    exec.map(mus, |&mu| full_pipeline(plant, cone, rho, mu, opts))
}
