//! Closed-loop simulation: an adaptive Dormand–Prince 5(4) integrator with
//! dense output, origin clamping for finite-time loops, and trace annotation
//! with inputs, barrier values and homogeneous norms.

use crate::cone::ConeSpec;
use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite_vec, Matrix, Vector};
use crate::parallel::Exec;
use crate::synthesis::{HomogeneousController, LinearPlant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Radius in the homogeneous norm below which the state is set to zero
    /// and held; `None` disables clamping.
    pub origin_clamp: Option<f64>,
    /// Output spacing in seconds (ignored when `output_times` is set).
    pub stride: f64,
    pub output_times: Option<Vec<f64>>,
    /// Steps never cross multiples of this period (sample-and-hold signals).
    pub hold_period: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_final: 10.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.05,
            min_step: 1e-14,
            origin_clamp: Some(1e-9),
            stride: 1e-3,
            output_times: None,
            hold_period: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("simulation config: {m}")));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be positive");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.min_step > 0.0 && self.min_step <= self.max_step) {
            return bad("need 0 < min_step <= max_step");
        }
        if let Some(c) = self.origin_clamp {
            if c.is_nan() || c <= 0.0 {
                return bad("origin clamp radius must be positive");
            }
        }
        if let Some(p) = self.hold_period {
            if p.is_nan() || p <= 0.0 {
                return bad("hold period must be positive");
            }
        }
        match &self.output_times {
            Some(ts) => {
                if ts.is_empty()
                    || ts.windows(2).any(|w| w[1] <= w[0])
                    || ts[0] < 0.0
                    || *ts.last().unwrap() > self.t_final * (1.0 + 1e-12)
                {
                    return bad("output times must be increasing within [0, t_final]");
                }
            }
            None => {
                if self.stride.is_nan() || self.stride <= 0.0 {
                    return bad("stride must be positive");
                }
            }
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        if let Some(ts) = &self.output_times {
            return ts.clone();
        }
        let steps = (self.t_final / self.stride * (1.0 + 1e-12)).floor() as usize;
        let mut g: Vec<f64> = (0..=steps).map(|k| k as f64 * self.stride).collect();
        if self.t_final - g.last().unwrap() > 1e-12 * self.t_final {
            g.push(self.t_final);
        }
        g
    }
}

/// Raw integrator output on the requested grid.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub clamped_at: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn checked<F>(rhs: &F, t: f64, x: &Vector) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let d = rhs(t, x)?;
    if d.len() != x.len() {
        return Err(Error::dim("right-hand side", x.len(), d.len()));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative(t));
    }
    Ok(d)
}

fn err_norm(e: &Vector, y0: &Vector, y1: &Vector, cfg: &SimConfig) -> f64 {
    let n = e.len() as f64;
    let s: f64 = (0..e.len())
        .map(|i| {
            let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            (e[i] / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &F, t: f64, x: &Vector, f0: &Vector, cfg: &SimConfig) -> Result<f64>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let sk = x.map(|v| cfg.abs_tol + cfg.rel_tol * v.abs());
    let dnf = f0.component_div(&sk).norm_squared();
    let dny = x.component_div(&sk).norm_squared();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * (dny / dnf).sqrt()
    };
    h = h.min(cfg.max_step);
    let x1 = x + f0 * h;
    let f1 = checked(rhs, t + h, &x1)?;
    let der2 = (&f1 - f0).component_div(&sk).norm() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(cfg.max_step).max(cfg.min_step))
}

/// Integrates `ẋ = rhs(t, x)` from `t = 0`. When `clamp_norm` is given together
/// with `cfg.origin_clamp`, a step ending below the clamp radius sets the
/// state to exactly zero for the rest of the horizon.
pub fn integrate<F>(
    rhs: F,
    x0: &Vector,
    cfg: &SimConfig,
    clamp_norm: Option<&Dilation>,
) -> Result<Solution>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    cfg.validate()?;
    ensure_finite_vec(x0, "initial state")?;
    if let Some(d) = clamp_norm {
        if d.dim() != x0.len() {
            return Err(Error::dim("clamp dilation", x0.len(), d.dim()));
        }
    }
    let grid = cfg.grid();
    let n = x0.len();
    let clamp = cfg.origin_clamp.zip(clamp_norm);
    let below = |x: &Vector| -> Result<bool> {
        match clamp {
            Some((r, d)) => Ok(d.norm(x)? < r),
            None => Ok(false),
        }
    };

    let mut times = Vec::with_capacity(grid.len() + 1);
    let mut states = Vec::with_capacity(grid.len() + 1);
    let mut next_out = 0;
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut clamped_at = None;
    let (mut accepted, mut rejected) = (0, 0);

    while next_out < grid.len() && grid[next_out] <= 0.0 {
        times.push(grid[next_out]);
        states.push(x.clone());
        next_out += 1;
    }
    if below(&x)? {
        clamped_at = Some(0.0);
    }

    let mut k1 = checked(&rhs, t, &x)?;
    let mut h = initial_step(&rhs, t, &x, &k1, cfg)?;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut fresh_k1 = true;

    while clamped_at.is_none() && t < cfg.t_final {
        if accepted + rejected > MAX_STEPS {
            return Err(Error::NotConverged("integrator step budget"));
        }
        if !fresh_k1 {
            k1 = checked(&rhs, t, &x)?;
            fresh_k1 = true;
        }
        // next barrier in time: horizon end or a hold-period edge
        let mut barrier = cfg.t_final;
        if let Some(p) = cfg.hold_period {
            let edge = ((t / p).floor() + 1.0) * p;
            let edge = if edge - t <= 1e-12 * p { edge + p } else { edge };
            barrier = barrier.min(edge);
        }
        h = h.min(cfg.max_step);
        let mut hits_barrier = false;
        if t + h >= barrier - 1e-12 * barrier.max(1.0) {
            h = barrier - t;
            hits_barrier = true;
        }
        if h < cfg.min_step && !hits_barrier {
            return Err(Error::StepUnderflow {
                t,
                state: x.iter().copied().collect(),
            });
        }
        // stages at the step end see the left limit of held signals
        let t_end = match cfg.hold_period {
            Some(hp) if hits_barrier => t + h - 1e-9 * h.min(hp),
            _ => t + h,
        };

        let k2 = checked(&rhs, t + C2 * h, &(&x + &k1 * (A21 * h)))?;
        let k3 = checked(&rhs, t + C3 * h, &(&x + (&k1 * A31 + &k2 * A32) * h))?;
        let k4 = checked(&rhs, t + C4 * h, &(&x + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h))?;
        let k5 = checked(
            &rhs,
            t + C5 * h,
            &(&x + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h),
        )?;
        let k6 = checked(
            &rhs,
            t_end,
            &(&x + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
        )?;
        let x_new = &x + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = checked(&rhs, t_end, &x_new)?;
        let e = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let err = err_norm(&e, &x, &x_new, cfg);

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);
            accepted += 1;
            let t_new = if hits_barrier { barrier } else { t + h };

            let clamp_now = below(&x_new)?;
            // dense output on (t, t_new]
            let r2 = &x_new - &x;
            let r3 = &k1 * h - &r2;
            let r4 = &r2 - &k7 * h - &r3;
            let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
            while next_out < grid.len() && grid[next_out] <= t_new + 1e-12 * t_new.max(1.0) {
                let tg = grid[next_out];
                if clamp_now && tg >= t_new {
                    break;
                }
                let th = ((tg - t) / h).clamp(0.0, 1.0);
                let y = &x + (&r2 + (&r3 + (&r4 + &r5 * (1.0 - th)) * th) * (1.0 - th)) * th;
                times.push(tg);
                states.push(y);
                next_out += 1;
            }
            t = t_new;
            if clamp_now {
                clamped_at = Some(t);
                break;
            }
            x = x_new;
            if hits_barrier && cfg.hold_period.is_some() {
                fresh_k1 = false;
            } else {
                k1 = k7;
            }
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
        }
    }

    if let Some(tc) = clamped_at {
        if times.last().is_none_or(|&l| l < tc) {
            times.push(tc);
            states.push(Vector::zeros(n));
        }
        while next_out < grid.len() {
            if grid[next_out] > tc {
                times.push(grid[next_out]);
                states.push(Vector::zeros(n));
            }
            next_out += 1;
        }
    }
    Ok(Solution {
        times,
        states,
        clamped_at,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// A scalar time signal.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Zero,
    /// `amplitude · sin(frequency · t)`
    Sine { amplitude: f64, frequency: f64 },
    /// `gain · inner(time_scale · t)`
    Scaled {
        gain: f64,
        time_scale: f64,
        inner: Box<Signal>,
    },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).sin(),
            Signal::Scaled {
                gain,
                time_scale,
                inner,
            } => gain * inner.eval(time_scale * t),
        }
    }

    pub fn scaled(self, gain: f64, time_scale: f64) -> Signal {
        Signal::Scaled {
            gain,
            time_scale,
            inner: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec {
    None,
    /// `channel · |q(t) · selectorᵀx|^exponent`
    StateMultiplicative {
        channel: Vector,
        selector: Vector,
        exponent: f64,
        signal: Signal,
    },
    /// Control evaluated at `x + q1(t)` with held uniform noise `q1` of the given
    /// magnitude, plus `additive · signal(t)`.
    NoisePlusAdditive {
        noise_magnitude: f64,
        hold: f64,
        seed: u64,
        additive: Vector,
        signal: Signal,
    },
}

impl PerturbationSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, PerturbationSpec::None)
    }

    fn hold_period(&self) -> Option<f64> {
        match self {
            PerturbationSpec::NoisePlusAdditive {
                noise_magnitude,
                hold,
                ..
            } if *noise_magnitude > 0.0 => Some(*hold),
            _ => None,
        }
    }
}

/// Held uniform noise on `[-magnitude, magnitude]^n`, random access by hold index.
pub fn held_noise(seed: u64, n: usize, magnitude: f64, hold: f64, t: f64) -> Vector {
    let k = (t / hold).floor().max(0.0) as u128;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(k * 2 * n as u128);
    Vector::from_fn(n, |_, _| {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        magnitude * (2.0 * u - 1.0)
    })
}

#[derive(Debug, Clone)]
pub enum Feedback {
    Linear(Matrix),
    Homogeneous(HomogeneousController),
    Mixed(HomogeneousController),
}

impl Feedback {
    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        match self {
            Feedback::Linear(k) => Ok(k * x),
            Feedback::Homogeneous(c) => c.eval_control(x),
            Feedback::Mixed(c) => c.eval_mixed_control(x),
        }
    }

    pub fn degree(&self) -> f64 {
        match self {
            Feedback::Linear(_) => 0.0,
            Feedback::Homogeneous(c) | Feedback::Mixed(c) => c.mu(),
        }
    }

    pub fn dilation(&self) -> Option<&Dilation> {
        match self {
            Feedback::Linear(_) => None,
            Feedback::Homogeneous(c) | Feedback::Mixed(c) => Some(c.dilation()),
        }
    }
}

/// `ẋ = Ax + Bu(·) + perturbation`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    plant: LinearPlant,
    feedback: Feedback,
    pert: PerturbationSpec,
}

/// Validates dimensions and exponent bounds and returns the closed loop.
pub fn build_rhs(plant: &LinearPlant, feedback: Feedback, pert: PerturbationSpec) -> Result<ClosedLoop> {
    let (n, m) = (plant.n(), plant.m());
    let gain_shape = match &feedback {
        Feedback::Linear(k) => k.shape(),
        Feedback::Homogeneous(c) | Feedback::Mixed(c) => c.k().shape(),
    };
    if gain_shape != (m, n) {
        return Err(Error::dim(
            "feedback gain",
            format!("{m}x{n}"),
            format!("{}x{}", gain_shape.0, gain_shape.1),
        ));
    }
    match &pert {
        PerturbationSpec::None => {}
        PerturbationSpec::StateMultiplicative {
            channel,
            selector,
            exponent,
            ..
        } => {
            if channel.len() != n || selector.len() != n {
                return Err(Error::dim("perturbation channel", n, channel.len().min(selector.len())));
            }
            let cap = 1.0 + feedback.degree();
            if !(*exponent > 0.0 && *exponent < cap) {
                return Err(Error::InvalidInput(format!(
                    "perturbation exponent {exponent} must lie in (0, {cap})"
                )));
            }
        }
        PerturbationSpec::NoisePlusAdditive {
            noise_magnitude,
            hold,
            additive,
            ..
        } => {
            if additive.len() != n {
                return Err(Error::dim("additive perturbation", n, additive.len()));
            }
            if !(*noise_magnitude >= 0.0 && *hold > 0.0) {
                return Err(Error::InvalidInput("noise magnitude and hold must be positive".into()));
            }
        }
    }
    Ok(ClosedLoop {
        plant: plant.clone(),
        feedback,
        pert,
    })
}

impl ClosedLoop {
    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    pub fn perturbation(&self) -> &PerturbationSpec {
        &self.pert
    }

    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    /// Applied input at time `t`.
    pub fn input(&self, t: f64, x: &Vector) -> Result<Vector> {
        match &self.pert {
            PerturbationSpec::NoisePlusAdditive {
                noise_magnitude,
                hold,
                seed,
                ..
            } if *noise_magnitude > 0.0 => {
                let q1 = held_noise(*seed, x.len(), *noise_magnitude, *hold, t);
                self.feedback.eval(&(x + q1))
            }
            _ => self.feedback.eval(x),
        }
    }

    pub fn field(&self, t: f64, x: &Vector) -> Result<Vector> {
        let mut dx = self.plant.a() * x + self.plant.b() * self.input(t, x)?;
        match &self.pert {
            PerturbationSpec::None => {}
            PerturbationSpec::StateMultiplicative {
                channel,
                selector,
                exponent,
                signal,
            } => {
                let q = signal.eval(t);
                dx += channel * (q * selector.dot(x)).abs().powf(*exponent);
            }
            PerturbationSpec::NoisePlusAdditive {
                additive, signal, ..
            } => {
                dx += additive * signal.eval(t);
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub barriers: Vec<Vector>,
    pub hom_norms: Vec<f64>,
    pub clamped_at: Option<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    /// Largest Euclidean state norm over the trace.
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Adds inputs, barrier values and homogeneous norms to a solution.
pub fn annotate(
    sol: Solution,
    lp: &ClosedLoop,
    cone: &ConeSpec,
    dil: &Dilation,
    exec: Exec,
) -> Result<Trace> {
    let rows = exec.map_range(sol.times.len(), |k| -> Result<(Vector, Vector, f64)> {
        let (t, x) = (sol.times[k], &sol.states[k]);
        let u = lp.input(t, x)?;
        let psi = dil.psi(x)?;
        Ok((u, cone.h() * psi, dil.norm(x)?))
    });
    let mut inputs = Vec::with_capacity(rows.len());
    let mut barriers = Vec::with_capacity(rows.len());
    let mut hom_norms = Vec::with_capacity(rows.len());
    for r in rows {
        let (u, b, h) = r?;
        inputs.push(u);
        barriers.push(b);
        hom_norms.push(h);
    }
    Ok(Trace {
        times: sol.times,
        states: sol.states,
        inputs,
        barriers,
        hom_norms,
        clamped_at: sol.clamped_at,
    })
}

/// Integrates a closed loop and annotates the result. Unperturbed runs clamp at
/// the origin in the homogeneous norm of `dil`; perturbed runs never clamp.
pub fn simulate(
    lp: &ClosedLoop,
    cone: &ConeSpec,
    dil: &Dilation,
    x0: &Vector,
    cfg: &SimConfig,
    exec: Exec,
) -> Result<Trace> {
    let mut cfg = cfg.clone();
    if cfg.hold_period.is_none() {
        cfg.hold_period = lp.perturbation().hold_period();
    }
    let clamp = lp.perturbation().is_none().then_some(dil);
    let sol = integrate(|t, x| lp.field(t, x), x0, &cfg, clamp)?;
    annotate(sol, lp, cone, dil, exec)
}

/// Runs independent simulations, one per initial state.
pub fn simulate_batch(
    lp: &ClosedLoop,
    cone: &ConeSpec,
    dil: &Dilation,
    x0s: &[Vector],
    cfg: &SimConfig,
    exec: Exec,
) -> Vec<Result<Trace>> {
    exec.map(x0s, |x0| simulate(lp, cone, dil, x0, cfg, Exec::Sequential))
}

/// First recorded time after which `||x|| ≤ threshold` holds for the rest of
/// the trace.
pub fn settling_time(trace: &Trace, threshold: f64) -> Option<f64> {
    let mut t_star = None;
    for (t, x) in trace.times.iter().zip(&trace.states).rev() {
        if x.norm() <= threshold {
            t_star = Some(*t);
        } else {
            break;
        }
    }
    t_star
}

/// Per-constraint minimum of the recorded barrier values.
pub fn min_barrier(trace: &Trace) -> Vector {
    let p = trace.barriers.first().map_or(0, |b| b.len());
    let mut out = Vector::from_element(p, f64::INFINITY);
    for b in &trace.barriers {
        for i in 0..p {
            out[i] = out[i].min(b[i]);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SymmetryReport {
    pub deviation: f64,
    pub worst_time: f64,
    pub pass: bool,
}

pub const SYMMETRY_TOL: f64 = 1e-5;

/// Compares `x_{q_s}(t, d(s)x0)` with `d(s) x_q(e^{μs}t, x0)` on a common grid.
/// `scaled_rhs` is the loop driven by the rescaled perturbation `q_s`, `rhs`
/// the loop driven by `q`.
pub fn symmetry_check<F, G>(
    scaled_rhs: F,
    rhs: G,
    dil: &Dilation,
    degree: f64,
    x0: &Vector,
    s: f64,
    cfg: &SimConfig,
) -> Result<SymmetryReport>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
    G: Fn(f64, &Vector) -> Result<Vector>,
{
    let grid = cfg.grid();
    let rate = (degree * s).exp();
    let mut lhs_cfg = cfg.clone();
    lhs_cfg.output_times = Some(grid.clone());
    let mut rhs_cfg = cfg.clone();
    rhs_cfg.t_final = cfg.t_final * rate;
    rhs_cfg.output_times = Some(grid.iter().map(|t| t * rate).collect());
    rhs_cfg.max_step = cfg.max_step * rate.max(1e-3);
    rhs_cfg.min_step = cfg.min_step.min(rhs_cfg.max_step);
    if let Some(p) = cfg.hold_period {
        rhs_cfg.hold_period = Some(p * rate);
    }
    let clamp = cfg.origin_clamp.map(|_| dil);
    let left = integrate(scaled_rhs, &dil.dilate(s, x0)?, &lhs_cfg, clamp)?;
    let right = integrate(rhs, x0, &rhs_cfg, clamp)?;
    let ds = dil.matrix(s)?;
    let mut deviation: f64 = 0.0;
    let mut worst_time = 0.0;
    let count = left.states.len().min(right.states.len());
    for k in 0..count {
        // clamp rows may be inserted off-grid; compare only grid rows
        if (left.times[k] - right.times[k] / rate).abs() > 1e-9 * left.times[k].max(1.0) {
            continue;
        }
        let d = (&left.states[k] - &ds * &right.states[k]).norm();
        if d > deviation {
            deviation = d;
            worst_time = left.times[k];
        }
    }
    Ok(SymmetryReport {
        deviation,
        worst_time,
        pass: deviation <= SYMMETRY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numerics::vec_of;

    fn plant() -> LinearPlant {
        LinearPlant::new(fixtures::plant_a(), fixtures::plant_b()).unwrap()
    }

    fn ctrl() -> HomogeneousController {
        HomogeneousController::new(
            plant(),
            fixtures::gain_k(),
            fixtures::gain_k0(),
            fixtures::g0(),
            fixtures::MU,
            fixtures::weight_p(),
        )
        .unwrap()
    }

    fn cone() -> ConeSpec {
        ConeSpec::new(fixtures::cone_rows(), None).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let cfg = SimConfig {
            t_final: 1.0,
            origin_clamp: None,
            stride: 0.1,
            ..SimConfig::default()
        };
        let sol = integrate(|_, x| Ok(-x), &vec_of(&[1.0]), &cfg, None).unwrap();
        assert_eq!(sol.times.len(), 11);
        assert!((sol.states[10][0] - (-1.0f64).exp()).abs() < 1e-7);
        for (t, x) in sol.times.iter().zip(&sol.states) {
            assert!((x[0] - (-t).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn dense_output_matches_oscillator() {
        let cfg = SimConfig {
            t_final: 6.0,
            origin_clamp: None,
            stride: 0.013,
            max_step: 1.0,
            ..SimConfig::default()
        };
        let sol = integrate(|_, x| Ok(vec_of(&[x[1], -x[0]])), &vec_of(&[1.0, 0.0]), &cfg, None)
            .unwrap();
        for (t, x) in sol.times.iter().zip(&sol.states) {
            assert!((x[0] - t.cos()).abs() < 1e-6, "t = {t}");
        }
        assert!(sol.accepted_steps < sol.times.len());
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            min_step: 1.0,
            max_step: 0.1,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            output_times: Some(vec![0.0, 2.0, 1.0]),
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn nonfinite_and_underflow_errors() {
        let cfg = SimConfig {
            t_final: 1.0,
            origin_clamp: None,
            ..SimConfig::default()
        };
        let r = integrate(|t, _| Ok(vec_of(&[if t > 0.5 { f64::NAN } else { 1.0 }])), &vec_of(&[0.0]), &cfg, None);
        assert!(matches!(r, Err(Error::NonFiniteDerivative(_))));
        let cfg = SimConfig {
            t_final: 2.0,
            origin_clamp: None,
            min_step: 1e-6,
            ..SimConfig::default()
        };
        // finite-time blow-up at t = 1
        let r = integrate(|_, x| Ok(x.map(|v| v * v)), &vec_of(&[1.0]), &cfg, None);
        assert!(matches!(r, Err(Error::StepUnderflow { .. }) | Err(Error::NonFiniteDerivative(_))));
    }

    #[test]
    fn held_noise_is_piecewise_constant_and_bounded() {
        let a = held_noise(3, 3, 0.01, 1e-3, 0.0101);
        let b = held_noise(3, 3, 0.01, 1e-3, 0.0109);
        let c = held_noise(3, 3, 0.01, 1e-3, 0.0111);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut mean = 0.0;
        for k in 0..2000 {
            let q = held_noise(7, 3, 0.01, 1e-3, k as f64 * 1e-3 + 5e-4);
            assert!(q.amax() <= 0.01);
            mean += q.sum();
        }
        assert!((mean / 6000.0).abs() < 1e-3);
    }

    #[test]
    fn build_rhs_examples() {
        let p = plant();
        let lp = build_rhs(&p, Feedback::Linear(fixtures::gain_k()), PerturbationSpec::None).unwrap();
        let x = vec_of(&[0.3, -0.2, 0.1]);
        assert!((lp.field(0.0, &x).unwrap() - fixtures::closed_loop_linear() * &x).amax() < 1e-15);

        let bad = PerturbationSpec::StateMultiplicative {
            channel: vec_of(&[1.0, 0.0, 0.0]),
            selector: vec_of(&[1.0, 0.0, 0.0]),
            exponent: 0.5,
            signal: Signal::Sine { amplitude: 1.0, frequency: 5.0 },
        };
        assert!(build_rhs(&p, Feedback::Homogeneous(ctrl()), bad).is_err());
        assert!(build_rhs(&p, Feedback::Linear(Matrix::zeros(3, 3)), PerturbationSpec::None).is_err());

        let lp = build_rhs(
            &p,
            Feedback::Homogeneous(ctrl()),
            PerturbationSpec::StateMultiplicative {
                channel: vec_of(&[1.0, 0.0, 0.0]),
                selector: vec_of(&[1.0, 0.0, 0.0]),
                exponent: 0.125,
                signal: Signal::Sine { amplitude: 1.0, frequency: 5.0 },
            },
        )
        .unwrap();
        let t: f64 = 0.3;
        let nominal = ctrl().closed_loop_field(&x).unwrap();
        let extra = ((5.0 * t).sin() * x[0]).abs().powf(0.125);
        assert!((lp.field(t, &x).unwrap() - nominal - vec_of(&[extra, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn settling_and_barrier_helpers() {
        let cfg = SimConfig {
            t_final: 3.0,
            origin_clamp: None,
            stride: 1e-3,
            ..SimConfig::default()
        };
        let sol = integrate(|_, x| Ok(-x), &vec_of(&[1.0]), &cfg, None).unwrap();
        let lp = build_rhs(
            &LinearPlant::new(Matrix::zeros(1, 1), Matrix::identity(1, 1)).unwrap(),
            Feedback::Linear(-Matrix::identity(1, 1)),
            PerturbationSpec::None,
        )
        .unwrap();
        let c = ConeSpec::new(Matrix::identity(1, 1), None).unwrap();
        let tr = annotate(sol, &lp, &c, &Dilation::standard(1), Exec::Sequential).unwrap();
        let ts = settling_time(&tr, (-2.0f64).exp()).unwrap();
        assert!((ts - 2.0).abs() <= 1e-3, "{ts}");
        assert!((min_barrier(&tr)[0] - (-3.0f64).exp()).abs() < 1e-7);

        let zero = integrate(|_, x| Ok(-x), &vec_of(&[0.0]), &cfg, None).unwrap();
        let tr = annotate(zero, &lp, &c, &Dilation::standard(1), Exec::Sequential).unwrap();
        assert_eq!(min_barrier(&tr)[0], 0.0);
    }

    #[test]
    fn homogeneous_loop_clamps_with_exact_zero_tail() {
        let c = ctrl();
        let lp = build_rhs(&plant(), Feedback::Homogeneous(c.clone()), PerturbationSpec::None).unwrap();
        let cfg = SimConfig {
            t_final: 5.0,
            ..SimConfig::default()
        };
        let tr = simulate(&lp, &cone(), c.dilation(), &fixtures::x0(), &cfg, Exec::Parallel).unwrap();
        let tc = tr.clamped_at.expect("clamp");
        assert!(tc <= 3.5, "{tc}");
        assert_eq!(settling_time(&tr, 0.0), Some(tc));
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        for (t, x) in tr.times.iter().zip(&tr.states) {
            if *t >= tc {
                assert!(x.iter().all(|&v| v == 0.0));
            }
        }
        // homogeneous norm strictly decreasing before the clamp
        let pre: Vec<f64> = tr
            .times
            .iter()
            .zip(&tr.hom_norms)
            .filter(|(t, _)| **t < tc)
            .map(|(_, h)| *h)
            .collect();
        assert!(pre.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn clamp_time_is_stable_under_refinement() {
        let c = ctrl();
        let lp = build_rhs(&plant(), Feedback::Homogeneous(c.clone()), PerturbationSpec::None).unwrap();
        let base = SimConfig {
            t_final: 5.0,
            stride: 0.01,
            ..SimConfig::default()
        };
        let fine = SimConfig {
            rel_tol: base.rel_tol / 2.0,
            abs_tol: base.abs_tol / 2.0,
            ..base.clone()
        };
        let a = integrate(|t, x| lp.field(t, x), &fixtures::x0(), &base, Some(c.dilation())).unwrap();
        let b = integrate(|t, x| lp.field(t, x), &fixtures::x0(), &fine, Some(c.dilation())).unwrap();
        let (ta, tb) = (a.clamped_at.unwrap(), b.clamped_at.unwrap());
        assert!((ta - tb).abs() < 0.01 * ta, "{ta} vs {tb}");
    }

    #[test]
    fn symmetry_negative_control() {
        let c = ctrl();
        let lp = build_rhs(&plant(), Feedback::Homogeneous(c.clone()), PerturbationSpec::None).unwrap();
        let cfg = SimConfig {
            t_final: 2.0,
            stride: 0.01,
            ..SimConfig::default()
        };
        let f = |t: f64, x: &Vector| lp.field(t, x);
        let ok = symmetry_check(f, f, c.dilation(), c.mu(), &fixtures::x0(), 0.0, &cfg).unwrap();
        assert!(ok.deviation < 1e-12);
        let ok = symmetry_check(f, f, c.dilation(), c.mu(), &fixtures::x0(), 0.5, &cfg).unwrap();
        assert!(ok.pass, "{}", ok.deviation);
        let wrong = symmetry_check(f, f, c.dilation(), -0.25, &fixtures::x0(), 0.5, &cfg).unwrap();
        assert!(wrong.deviation > 1e-2, "{}", wrong.deviation);
    }

    #[test]
    fn batch_runs_match_single_runs() {
        let c = ctrl();
        let lp = build_rhs(&plant(), Feedback::Homogeneous(c.clone()), PerturbationSpec::None).unwrap();
        let cfg = SimConfig {
            t_final: 1.0,
            stride: 0.05,
            ..SimConfig::default()
        };
        let x0s = vec![fixtures::x0(), vec_of(&[1.0, 0.5, -0.2]), vec_of(&[0.1, 0.1, 0.0])];
        let par = simulate_batch(&lp, &cone(), c.dilation(), &x0s, &cfg, Exec::Parallel);
        let seq = simulate_batch(&lp, &cone(), c.dilation(), &x0s, &cfg, Exec::Sequential);
        for (a, b) in par.into_iter().zip(seq) {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert_eq!(a.states, b.states);
            assert_eq!(a.barriers, b.barriers);
        }
    }
}
