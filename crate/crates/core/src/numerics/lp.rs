//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as `min cᵀv` subject to `A v <= b` and per-variable
//! bounds `lo <= v <= hi` (either side may be infinite). Bounds are folded
//! into a standard-form tableau: shifted or reflected for one-sided bounds,
//! split into a difference of nonnegatives for free variables, with an extra
//! row for finite upper bounds. Pivoting uses Bland's rule throughout.

use super::Matrix;
use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub a_ineq: Matrix,
    pub b: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, objective } => Some((x, *objective)),
            _ => None,
        }
    }
}

impl LpProblem {
    /// An LP with no inequality rows and free variables.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            a_ineq: Matrix::zeros(0, n),
            b: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends the row `coeffs · v <= rhs`.
    pub fn push_le(&mut self, coeffs: &[f64], rhs: f64) {
        let n = self.num_vars();
        assert_eq!(coeffs.len(), n, "row length");
        let m = self.a_ineq.nrows();
        let mut a = Matrix::zeros(m + 1, n);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a_ineq);
        for (j, &c) in coeffs.iter().enumerate() {
            a[(m, j)] = c;
        }
        self.a_ineq = a;
        self.b.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a_ineq.ncols() != n {
            return Err(Error::dim("LP rows", n, self.a_ineq.ncols()));
        }
        if self.a_ineq.nrows() != self.b.len() {
            return Err(Error::dim("LP rhs", self.a_ineq.nrows(), self.b.len()));
        }
        if self.bounds.len() != n {
            return Err(Error::dim("LP bounds", n, self.bounds.len()));
        }
        if self.objective.iter().any(|c| !c.is_finite())
            || self.b.iter().any(|c| !c.is_finite())
            || self.a_ineq.iter().any(|c| !c.is_finite())
        {
            return Err(Error::NonFinite("LP data"));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(Error::InvalidInput(format!(
                    "LP variable {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shifted { col: usize, offset: f64 },
    Reflected { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

pub fn lp_solve(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ny = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &p.bounds {
        let map = if lo.is_finite() {
            if hi.is_finite() {
                upper_rows.push((ny, hi - lo));
            }
            VarMap::Shifted { col: ny, offset: lo }
        } else if hi.is_finite() {
            VarMap::Reflected { col: ny, offset: hi }
        } else {
            ny += 1;
            VarMap::Split { pos: ny - 1, neg: ny }
        };
        ny += 1;
        maps.push(map);
    }

    // standard-form rows A' y <= b'
    let m_orig = p.a_ineq.nrows();
    let m = m_orig + upper_rows.len();
    let mut rows = vec![vec![0.0; ny]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m_orig {
        let mut r = p.b[i];
        for (j, map) in maps.iter().enumerate() {
            let a = p.a_ineq[(i, j)];
            match *map {
                VarMap::Shifted { col, offset } => {
                    rows[i][col] += a;
                    r -= a * offset;
                }
                VarMap::Reflected { col, offset } => {
                    rows[i][col] -= a;
                    r -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    rows[i][pos] += a;
                    rows[i][neg] -= a;
                }
            }
        }
        rhs[i] = r;
    }
    for (k, &(col, width)) in upper_rows.iter().enumerate() {
        rows[m_orig + k][col] = 1.0;
        rhs[m_orig + k] = width;
    }

    let mut cost = vec![0.0; ny];
    let mut cost_offset = 0.0;
    for (j, map) in maps.iter().enumerate() {
        let c = p.objective[j];
        match *map {
            VarMap::Shifted { col, offset } => {
                cost[col] += c;
                cost_offset += c * offset;
            }
            VarMap::Reflected { col, offset } => {
                cost[col] -= c;
                cost_offset += c * offset;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let y = match Tableau::solve(&rows, &rhs, &cost)? {
        Phase::Optimal(y) => y,
        Phase::Infeasible => return Ok(LpOutcome::Infeasible),
        Phase::Unbounded => return Ok(LpOutcome::Unbounded),
    };

    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shifted { col, offset } => offset + y[col],
            VarMap::Reflected { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = x.iter().zip(&p.objective).map(|(a, b)| a * b).sum::<f64>();
    debug_assert!((objective - (cost_offset + dot(&cost, &y))).abs() < 1e-6 * (1.0 + objective.abs()));
    Ok(LpOutcome::Optimal { x, objective })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Phase {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

struct Tableau {
    // m rows, each with `width` coefficients followed by the rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    first_artificial: usize,
}

impl Tableau {
    /// `min costᵀy` s.t. `rows · y <= rhs`, `y >= 0`.
    fn solve(rows: &[Vec<f64>], rhs: &[f64], cost: &[f64]) -> Result<Phase> {
        let m = rows.len();
        let ny = cost.len();
        let n_art = rhs.iter().filter(|&&b| b < 0.0).count();
        let width = ny + m + n_art;
        let first_artificial = ny + m;

        let mut t = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0; m];
        let mut art = first_artificial;
        for i in 0..m {
            let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..ny {
                t[i][j] = sign * rows[i][j];
            }
            t[i][ny + i] = sign;
            t[i][width] = sign * rhs[i];
            if sign < 0.0 {
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = ny + i;
            }
        }
        let mut tab = Tableau {
            t,
            basis,
            width,
            first_artificial,
        };

        if n_art > 0 {
            let mut phase1 = vec![0.0; width];
            for c in phase1.iter_mut().skip(first_artificial) {
                *c = 1.0;
            }
            match tab.run(&phase1, width)? {
                true => {}
                false => unreachable!("phase one is bounded below by zero"),
            }
            let infeasibility: f64 = (0..m)
                .filter(|&i| tab.basis[i] >= first_artificial)
                .map(|i| tab.t[i][width])
                .sum();
            if infeasibility > FEAS_TOL * (1.0 + rhs.iter().map(|b| b.abs()).fold(0.0, f64::max)) {
                return Ok(Phase::Infeasible);
            }
            tab.drive_out_artificials();
        }

        let mut phase2 = vec![0.0; width];
        phase2[..ny].copy_from_slice(cost);
        if !tab.run(&phase2, first_artificial)? {
            return Ok(Phase::Unbounded);
        }
        let mut y = vec![0.0; ny];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < ny {
                y[b] = tab.t[i][width].max(0.0);
            }
        }
        Ok(Phase::Optimal(y))
    }

    /// Runs Bland-rule pivots; columns `>= enter_limit` may not enter.
    /// Returns false when the objective is unbounded below.
    fn run(&mut self, cost: &[f64], enter_limit: usize) -> Result<bool> {
        let m = self.t.len();
        let rhs = self.width;
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..enter_limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - (0..m)
                        .map(|i| cost[self.basis[i]] * self.t[i][j])
                        .sum::<f64>();
                if reduced < -PIVOT_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][rhs] / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leaving else {
                return Ok(false);
            };
            self.pivot(row, col);
        }
        Err(Error::NotConverged("simplex (pivot limit)"))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    fn drive_out_artificials(&mut self) {
        for i in 0..self.t.len() {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let replacement = (0..self.first_artificial)
                .find(|&j| !self.basis.contains(&j) && self.t[i][j].abs() > 1e-9);
            if let Some(j) = replacement {
                self.pivot(i, j);
            }
            // otherwise the row is redundant; the artificial stays basic at zero
        }
    }
}
