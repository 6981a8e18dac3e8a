//! Primal simplex on the inequality form `min c·y s.t. a_q·y <= b_q`.
//!
//! Every model row and every finite variable bound becomes one inequality.
//! A vertex is described by a working set of `dim` linearly independent
//! active inequalities whose coefficient matrix is kept as an explicit dense
//! inverse, updated by rank-one corrections on every exchange. The basis is
//! therefore `n x n` in the number of variables no matter how many rows the
//! model has, which suits the attack models (few injections, many hull
//! facets).
//!
//! Phase 1 appends an artificial variable `s` to every model row
//! (`a·x - s <= b`) and minimizes it; phase 2 pins `s` to zero.
//! Variables without finite bounds start "pinned" at zero and are released
//! the first time their multiplier says moving them improves the objective.

use nalgebra::DMatrix;

use super::model::{MilpModel, Sense};
use super::OptError;

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-7;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_SWITCH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowOrigin {
    Model(usize),
    Lower(usize),
    Upper(usize),
    ArtificialLower,
    ArtificialUpper,
}

#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<(usize, f64)>,
    rhs: f64,
    origin: RowOrigin,
}

impl Row {
    fn dot(&self, y: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * y[j]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Member {
    Row(usize),
    /// Variable held at a value until its multiplier releases it.
    Pin(usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest row/bound violation of `x` (primal feasibility).
    pub primal_infeasibility: f64,
    /// Most negative multiplier of an active inequality at termination.
    pub dual_infeasibility: f64,
}

/// Reusable simplex state. After a successful solve the final vertex is kept
/// so that a new objective can be optimized without a fresh phase 1.
#[derive(Debug, Clone)]
pub struct LpWorkspace {
    n: usize,
    dim: usize,
    rows: Vec<Row>,
    members: Vec<Member>,
    in_w: Vec<Option<usize>>,
    ainv: Vec<f64>,
    y: Vec<f64>,
    cost: Vec<f64>,
    feasible: bool,
    updates_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl LpWorkspace {
    /// Builds the inequality form of `model` with binaries relaxed to their
    /// declared bounds.
    pub fn new(model: &MilpModel) -> Result<Self, OptError> {
        let lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
        let upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
        Self::with_bounds(model, &lower, &upper)
    }

    pub fn with_bounds(model: &MilpModel, lower: &[f64], upper: &[f64]) -> Result<Self, OptError> {
        Self::with_bounds_skipping(model, lower, upper, &[])
    }

    /// As [`with_bounds`](Self::with_bounds), leaving out the model rows
    /// flagged in `skip` (rows known to be vacuous under these bounds).
    pub fn with_bounds_skipping(
        model: &MilpModel,
        lower: &[f64],
        upper: &[f64],
        skip: &[bool],
    ) -> Result<Self, OptError> {
        let n = model.n_vars();
        if n == 0 {
            return Err(OptError::InvalidModel("model has no variables".into()));
        }
        let dim = n + 1;
        let s = n;
        let mut rows = Vec::with_capacity(2 * model.constraints.len() + 2 * n + 2);
        for (ci, c) in model.constraints.iter().enumerate() {
            if skip.get(ci).copied().unwrap_or(false) {
                continue;
            }
            let base: Vec<(usize, f64)> = c.expr.terms.iter().map(|&(v, a)| (v.0, a)).collect();
            let mut push = |sign: f64| {
                let mut coefs: Vec<(usize, f64)> =
                    base.iter().map(|&(j, a)| (j, sign * a)).collect();
                coefs.push((s, -1.0));
                rows.push(Row {
                    coefs,
                    rhs: sign * c.rhs,
                    origin: RowOrigin::Model(ci),
                });
            };
            match c.sense {
                Sense::Le => push(1.0),
                Sense::Ge => push(-1.0),
                Sense::Eq => {
                    push(1.0);
                    push(-1.0);
                }
            }
        }
        for j in 0..n {
            if lower[j] > upper[j] {
                return Err(OptError::Infeasible);
            }
            if lower[j].is_finite() {
                rows.push(Row {
                    coefs: vec![(j, -1.0)],
                    rhs: -lower[j],
                    origin: RowOrigin::Lower(j),
                });
            }
            if upper[j].is_finite() {
                rows.push(Row {
                    coefs: vec![(j, 1.0)],
                    rhs: upper[j],
                    origin: RowOrigin::Upper(j),
                });
            }
        }
        rows.push(Row {
            coefs: vec![(s, -1.0)],
            rhs: 0.0,
            origin: RowOrigin::ArtificialLower,
        });
        let max_iterations = 50 * (rows.len() + dim) + 1000;
        let mut ws = Self {
            n,
            dim,
            in_w: vec![None; rows.len() + 1],
            rows,
            members: Vec::with_capacity(dim),
            ainv: vec![0.0; dim * dim],
            y: vec![0.0; dim],
            cost: vec![0.0; dim],
            feasible: false,
            updates_since_refactor: 0,
            iterations: 0,
            max_iterations,
        };
        ws.start_phase1(lower, upper)?;
        Ok(ws)
    }

    fn start_phase1(&mut self, lower: &[f64], upper: &[f64]) -> Result<(), OptError> {
        let n = self.n;
        let mut lower_row = vec![None; n];
        let mut upper_row = vec![None; n];
        for (q, r) in self.rows.iter().enumerate() {
            match r.origin {
                RowOrigin::Lower(j) => lower_row[j] = Some(q),
                RowOrigin::Upper(j) => upper_row[j] = Some(q),
                _ => {}
            }
        }
        for j in 0..n {
            let (member, value) = if let Some(q) = lower_row[j] {
                (Member::Row(q), lower[j])
            } else if let Some(q) = upper_row[j] {
                (Member::Row(q), upper[j])
            } else {
                (Member::Pin(j, 0.0), 0.0)
            };
            self.y[j] = value;
            self.members.push(member);
        }
        self.y[n] = 0.0;
        let mut worst: Option<(usize, f64)> = None;
        for (q, r) in self.rows.iter().enumerate() {
            if let RowOrigin::Model(_) = r.origin {
                let viol = r.dot(&self.y) - r.rhs;
                if viol > worst.map_or(0.0, |w| w.1) {
                    worst = Some((q, viol));
                }
            }
        }
        let artificial_lower = self.rows.len() - 1;
        match worst {
            Some((q, viol)) => {
                self.y[n] = viol;
                self.members.push(Member::Row(q));
            }
            None => self.members.push(Member::Row(artificial_lower)),
        }
        for (pos, m) in self.members.iter().enumerate() {
            if let Member::Row(q) = m {
                self.in_w[*q] = Some(pos);
            }
        }
        self.cost = vec![0.0; self.dim];
        self.cost[n] = 1.0;
        self.refactor()?;
        Ok(())
    }

    fn member_vec(&self, m: Member) -> (Vec<(usize, f64)>, f64) {
        match m {
            Member::Row(q) => (self.rows[q].coefs.clone(), self.rows[q].rhs),
            Member::Pin(j, v) => (vec![(j, 1.0)], v),
        }
    }

    fn refactor(&mut self) -> Result<(), OptError> {
        let dim = self.dim;
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut b = nalgebra::DVector::<f64>::zeros(dim);
        for (i, &m) in self.members.iter().enumerate() {
            let (coefs, rhs) = self.member_vec(m);
            for (j, v) in coefs {
                a[(i, j)] += v;
            }
            b[i] = rhs;
        }
        let lu = a.lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| OptError::Numerical("singular working set".into()))?;
        for r in 0..dim {
            for c in 0..dim {
                self.ainv[r * dim + c] = inv[(r, c)];
            }
        }
        let y = &inv * b;
        self.y.copy_from_slice(y.as_slice());
        self.updates_since_refactor = 0;
        Ok(())
    }

    /// Column `i` of the working-set inverse.
    fn column(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.ainv[r * self.dim + i]).collect()
    }

    fn multipliers(&self) -> Vec<f64> {
        let dim = self.dim;
        let mut lambda = vec![0.0; dim];
        for (j, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                let row = &self.ainv[j * dim..(j + 1) * dim];
                for (l, &a) in lambda.iter_mut().zip(row) {
                    *l -= c * a;
                }
            }
        }
        lambda
    }

    /// Runs simplex iterations on the current cost until optimal.
    fn iterate(&mut self) -> Result<LpStatus, OptError> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(OptError::IterationLimit(self.iterations));
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let lambda = self.multipliers();

            // Pricing: pins with any nonzero multiplier come first.
            let mut enter: Option<(usize, f64)> = None;
            for (pos, m) in self.members.iter().enumerate() {
                if let Member::Pin(..) = m {
                    if lambda[pos].abs() > DUAL_TOL {
                        enter = Some((pos, if lambda[pos] > 0.0 { 1.0 } else { -1.0 }));
                        break;
                    }
                }
            }
            if enter.is_none() {
                let mut best = -DUAL_TOL;
                let mut best_key = usize::MAX;
                for (pos, m) in self.members.iter().enumerate() {
                    if let Member::Row(q) = *m {
                        let l = lambda[pos];
                        if l < -DUAL_TOL {
                            if bland {
                                if q < best_key {
                                    best_key = q;
                                    enter = Some((pos, -1.0));
                                }
                            } else if l < best {
                                best = l;
                                enter = Some((pos, -1.0));
                            }
                        }
                    }
                }
            }
            let Some((leave_pos, sign)) = enter else {
                return Ok(LpStatus::Optimal);
            };

            // d solves A_W d = sign * e_pos: keeps other members active and
            // moves off the leaving one into its feasible side.
            let mut d = self.column(leave_pos);
            for v in d.iter_mut() {
                *v *= sign;
            }

            // Harris two-pass ratio test.
            let mut rates: Vec<(usize, f64, f64)> = Vec::new();
            let mut bound = f64::INFINITY;
            for (q, row) in self.rows.iter().enumerate() {
                if self.in_w[q].is_some() {
                    continue;
                }
                let rate = row.dot(&d);
                if rate > PIVOT_TOL {
                    let slack = (row.rhs - row.dot(&self.y)).max(0.0);
                    bound = bound.min((slack + HARRIS_TOL) / rate);
                    rates.push((q, rate, slack));
                }
            }
            if rates.is_empty() {
                return Ok(LpStatus::Unbounded);
            }
            let mut choice: Option<(usize, f64, f64)> = None;
            if bland {
                let min_ratio = rates
                    .iter()
                    .map(|&(_, r, s)| s / r)
                    .fold(f64::INFINITY, f64::min);
                for &(q, r, s) in &rates {
                    if s / r <= min_ratio + 1e-12 && choice.is_none_or(|c| q < c.0) {
                        choice = Some((q, r, s));
                    }
                }
            } else {
                for &(q, r, s) in &rates {
                    if s / r <= bound && choice.is_none_or(|c| r > c.1) {
                        choice = Some((q, r, s));
                    }
                }
            }
            let (enter_row, rate, slack) = choice.expect("at least one candidate");
            let step = slack / rate;
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for (yi, di) in self.y.iter_mut().zip(&d) {
                *yi += step * di;
            }
            self.exchange(leave_pos, enter_row)?;
            self.iterations += 1;
        }
    }

    fn exchange(&mut self, pos: usize, q: usize) -> Result<(), OptError> {
        let dim = self.dim;
        // v = a_q^T A^{-1}
        let mut v = vec![0.0; dim];
        for &(j, a) in &self.rows[q].coefs {
            let row = &self.ainv[j * dim..(j + 1) * dim];
            for (vi, &r) in v.iter_mut().zip(row) {
                *vi += a * r;
            }
        }
        let denom = v[pos];
        if denom.abs() < 1e-13 {
            return Err(OptError::Numerical("degenerate exchange".into()));
        }
        let col = self.column(pos);
        v[pos] -= 1.0;
        for r in 0..dim {
            let f = col[r] / denom;
            if f != 0.0 {
                let row = &mut self.ainv[r * dim..(r + 1) * dim];
                for (a, &vc) in row.iter_mut().zip(&v) {
                    *a -= f * vc;
                }
            }
        }
        if let Member::Row(old) = self.members[pos] {
            self.in_w[old] = None;
        }
        self.members[pos] = Member::Row(q);
        self.in_w[q] = Some(pos);
        self.updates_since_refactor += 1;
        if self.updates_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn run_phase1(&mut self) -> Result<bool, OptError> {
        match self.iterate()? {
            LpStatus::Optimal => {}
            // min s with s >= 0 is bounded
            LpStatus::Unbounded | LpStatus::Infeasible => {
                return Err(OptError::Numerical("phase 1 unbounded".into()))
            }
        }
        self.refactor()?;
        let scale = 1.0 + self.y[..self.n].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if self.y[self.n] > PHASE1_TOL * scale {
            return Ok(false);
        }
        // Pin the artificial at zero for phase 2.
        self.rows.push(Row {
            coefs: vec![(self.n, 1.0)],
            rhs: 0.0,
            origin: RowOrigin::ArtificialUpper,
        });
        self.in_w.push(None);
        self.y[self.n] = 0.0;
        self.feasible = true;
        Ok(true)
    }

    /// Minimizes `objective` (dense, one coefficient per model variable).
    pub fn solve(&mut self, objective: &[f64]) -> Result<LpResult, OptError> {
        assert_eq!(objective.len(), self.n);
        if !self.feasible && !self.run_phase1()? {
            return Ok(self.result(LpStatus::Infeasible, objective));
        }
        self.cost[..self.n].copy_from_slice(objective);
        self.cost[self.n] = 0.0;
        let status = self.iterate()?;
        self.refactor()?;
        Ok(self.result(status, objective))
    }

    /// Phase 1 only: is the feasible region non-empty?
    pub fn is_feasible(&mut self) -> Result<bool, OptError> {
        if self.feasible {
            return Ok(true);
        }
        self.run_phase1()
    }

    fn result(&self, status: LpStatus, objective: &[f64]) -> LpResult {
        let x = self.y[..self.n].to_vec();
        let obj = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let primal = self
            .rows
            .iter()
            .filter(|r| !matches!(r.origin, RowOrigin::ArtificialLower | RowOrigin::ArtificialUpper))
            .map(|r| {
                let without_s: f64 = r
                    .coefs
                    .iter()
                    .filter(|&&(j, _)| j < self.n)
                    .map(|&(j, a)| a * x[j])
                    .sum();
                without_s - r.rhs
            })
            .fold(0.0_f64, f64::max);
        let lambda = self.multipliers();
        let dual = self
            .members
            .iter()
            .zip(&lambda)
            .map(|(m, &l)| match m {
                Member::Row(_) => (-l).max(0.0),
                Member::Pin(..) => l.abs(),
            })
            .fold(0.0_f64, f64::max);
        LpResult {
            status,
            x,
            objective: obj,
            iterations: self.iterations,
            primal_infeasibility: primal,
            dual_infeasibility: dual,
        }
    }
}

/// Solves the LP relaxation of `model` (binaries relaxed to [0, 1]).
pub fn solve_lp(model: &MilpModel) -> Result<LpResult, OptError> {
    model.validate()?;
    let mut ws = LpWorkspace::new(model)?;
    let c = dense_objective(model);
    ws.solve(&c)
}

pub(crate) fn dense_objective(model: &MilpModel) -> Vec<f64> {
    let mut c = vec![0.0; model.n_vars()];
    for &(v, a) in &model.objective.terms {
        c[v.0] += a;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::model::{LinExpr, MilpModel, Sense};

    #[test]
    fn single_variable_bounds() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint("lo", LinExpr::var(x), Sense::Ge, 2.0);
        m.add_constraint("hi", LinExpr::var(x), Sense::Le, 5.0);
        m.set_objective(LinExpr::var(x));
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-9);
        assert!((r.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_edge() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.add_constraint("sum", LinExpr::var(x).with_term(y, 1.0), Sense::Le, 1.0);
        m.set_objective(LinExpr::term(x, -1.0).with_term(y, -1.0));
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 1.0).abs() < 1e-9);
        assert!((r.x[0] + r.x[1] - 1.0).abs() < 1e-9);
        assert!(r.dual_infeasibility < 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_constraint("a", LinExpr::var(x), Sense::Ge, 6.0);
        m.add_constraint("b", LinExpr::var(x), Sense::Le, 4.0);
        m.set_objective(LinExpr::var(x));
        assert_eq!(solve_lp(&m).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint("a", LinExpr::var(x).with_term(y, -1.0), Sense::Le, 1.0);
        m.set_objective(LinExpr::term(x, -1.0));
        assert_eq!(solve_lp(&m).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows() {
        // min x + 2y s.t. x + y = 3, x - y = 1
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint("s", LinExpr::var(x).with_term(y, 1.0), Sense::Eq, 3.0);
        m.add_constraint("d", LinExpr::var(x).with_term(y, -1.0), Sense::Eq, 1.0);
        m.set_objective(LinExpr::var(x).with_term(y, 2.0));
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_new_objective() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 4.0);
        let y = m.add_continuous("y", 0.0, 4.0);
        m.add_constraint("c", LinExpr::var(x).with_term(y, 1.0), Sense::Le, 5.0);
        let mut ws = LpWorkspace::new(&m).unwrap();
        let a = ws.solve(&[-1.0, 0.0]).unwrap();
        assert!((a.x[0] - 4.0).abs() < 1e-9);
        let b = ws.solve(&[0.0, -1.0]).unwrap();
        assert!((b.x[1] - 4.0).abs() < 1e-9);
        let c = ws.solve(&[-1.0, -1.0]).unwrap();
        assert!((c.objective + 5.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Many redundant constraints through the optimum.
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        for k in 1..20 {
            let a = k as f64;
            m.add_constraint(format!("r{k}"), LinExpr::term(x, a).with_term(y, 1.0), Sense::Le, a);
        }
        m.set_objective(LinExpr::term(x, -1.0).with_term(y, -1.0));
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 1.0).abs() < 1e-9, "{}", r.objective);
    }
}
