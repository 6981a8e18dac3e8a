use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::lp::{dense_objective, LpStatus, LpWorkspace};
use super::model::{MilpModel, VarKind};
use super::{MilpSolution, OptError, SolveStatus};

const INTEGRALITY_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct MilpLimits {
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    /// Return as soon as any integral point is found (feasibility checks).
    pub first_feasible: bool,
}

impl Default for MilpLimits {
    fn default() -> Self {
        Self {
            max_nodes: 200_000,
            time_limit: None,
            first_feasible: false,
        }
    }
}

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound (then oldest node) wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Open nodes: best-first normally, depth-first when only a feasible
/// point is wanted.
enum Frontier {
    Best(BinaryHeap<Node>),
    Depth(Vec<Node>),
}

impl Frontier {
    fn push(&mut self, n: Node) {
        match self {
            Frontier::Best(h) => h.push(n),
            Frontier::Depth(v) => v.push(n),
        }
    }

    fn pop(&mut self) -> Option<Node> {
        match self {
            Frontier::Best(h) => h.pop(),
            Frontier::Depth(v) => v.pop(),
        }
    }

    fn clear(&mut self) {
        match self {
            Frontier::Best(h) => h.clear(),
            Frontier::Depth(v) => v.clear(),
        }
    }
}

/// Branch-and-bound over the binaries of `model`. Nodes are explored
/// best-first; with `first_feasible` the search dives depth-first towards
/// the rounded LP value instead. Indicator rows whose binary is fixed to
/// the non-triggering value are dropped from node LPs.
pub fn solve_milp(model: &MilpModel, limits: MilpLimits) -> Result<MilpSolution, OptError> {
    model.validate()?;
    let start = Instant::now();
    let c = dense_objective(model);
    let constant = model.objective.constant;
    let base_lo: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let binaries: Vec<usize> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();

    let mut heap = if limits.first_feasible {
        Frontier::Depth(Vec::new())
    } else {
        Frontier::Best(BinaryHeap::new())
    };
    // model row -> (binary, trigger) for indicator rows
    let mut indicator_of: Vec<Option<(usize, bool)>> = vec![None; model.constraints.len()];
    for ind in &model.indicators {
        if let Some(slot) = indicator_of.get_mut(ind.row) {
            *slot = Some((ind.binary.0, ind.trigger));
        }
    }
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        fixings: Vec::new(),
    });
    let mut seq = 1;
    let mut nodes = 0;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut hit_limit = false;

    let gap = |inc: f64| GAP_TOL * (1.0 + inc.abs());

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - gap(*inc) {
                // Best-first: every remaining node is at least as bad.
                heap.clear();
                break;
            }
        }
        if nodes >= limits.max_nodes || limits.time_limit.is_some_and(|t| start.elapsed() > t) {
            hit_limit = true;
            break;
        }
        nodes += 1;

        let mut lo = base_lo.clone();
        let mut hi = base_hi.clone();
        for &(j, v) in &node.fixings {
            lo[j] = v;
            hi[j] = v;
        }
        let skip: Vec<bool> = indicator_of
            .iter()
            .map(|ind| ind.is_some_and(|(b, trig)| lo[b] == hi[b] && (lo[b] == 1.0) != trig))
            .collect();
        let res = match LpWorkspace::with_bounds_skipping(model, &lo, &hi, &skip) {
            Ok(mut ws) => ws.solve(&c)?,
            Err(OptError::Infeasible) => continue,
            Err(e) => return Err(e),
        };
        match res.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(OptError::Unbounded),
            LpStatus::Optimal => {}
        }
        let obj = res.objective + constant;
        if let Some((inc, _)) = &incumbent {
            if obj >= inc - gap(*inc) {
                continue;
            }
        }

        // Most fractional binary, lowest id on ties.
        let mut branch: Option<(usize, f64)> = None;
        for &j in &binaries {
            let frac = (res.x[j] - res.x[j].round()).abs();
            if frac > INTEGRALITY_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut x = res.x;
                for &j in &binaries {
                    x[j] = x[j].round();
                }
                incumbent = Some((obj, x));
                if limits.first_feasible {
                    break;
                }
            }
            Some((j, _)) => {
                // Depth-first pops the last push: the child nearest the LP value.
                let order = if res.x[j] >= 0.5 { [0.0, 1.0] } else { [1.0, 0.0] };
                for v in order {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node {
                        bound: obj,
                        seq,
                        fixings,
                    });
                    seq += 1;
                }
            }
        }
    }

    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (status, objective, values) = match incumbent {
        Some((obj, x)) => {
            let st = if hit_limit {
                SolveStatus::TimeLimit
            } else {
                SolveStatus::Optimal
            };
            (st, obj, x)
        }
        None if hit_limit => (SolveStatus::TimeLimit, f64::INFINITY, Vec::new()),
        None => (SolveStatus::Infeasible, f64::INFINITY, Vec::new()),
    };
    Ok(MilpSolution {
        status,
        values,
        objective,
        nodes,
        wall_ms,
        deterministic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::model::{LinExpr, Sense};

    #[test]
    fn knapsack() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_constraint("cap", LinExpr::var(a).with_term(b, 1.0), Sense::Le, 1.0);
        m.set_objective(LinExpr::term(a, -3.0).with_term(b, -2.0));
        let s = solve_milp(&m, MilpLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 3.0).abs() < 1e-9);
        assert_eq!(s.value(a), 1.0);
        assert_eq!(s.value(b), 0.0);
    }

    #[test]
    fn infeasible_binary_model() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_constraint("half", LinExpr::var(a).with_term(b, 1.0), Sense::Eq, 1.5);
        let s = solve_milp(&m, MilpLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(!s.is_feasible());
    }

    #[test]
    fn node_limit_reports_time_limit() {
        let mut m = MilpModel::new();
        let vars: Vec<_> = (0..6).map(|i| m.add_binary(format!("b{i}"))).collect();
        let mut e = LinExpr::new();
        for &v in &vars {
            e.add_term(v, 2.0);
        }
        m.add_constraint("odd", e.clone(), Sense::Eq, 7.0);
        let s = solve_milp(
            &m,
            MilpLimits {
                max_nodes: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::TimeLimit);
    }
}
