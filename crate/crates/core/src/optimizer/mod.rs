//! Small LP/MILP toolkit: model container, inequality-form simplex,
//! best-first branch-and-bound, big-M indicator encodings and LP-format export.

pub mod encode;
pub mod export;
pub mod lp;
pub mod milp;
pub mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encode::{
    encode_and, encode_indicator, encode_indicator_gt, encode_indicator_tight, encode_or, BigMConfig,
};
pub use export::{solution_json, write_lp_format};
pub use lp::{solve_lp, LpResult, LpStatus, LpWorkspace};
pub use milp::{solve_milp, MilpLimits};
pub use model::{Constraint, Indicator, LinExpr, MilpModel, Sense, VarId, VarKind, Variable};

/// Feasibility tolerance applied to solutions.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("big-M {m} too small for row {row}: relaxed side still reaches {reach}")]
    BigMTooSmall { row: String, m: f64, reach: f64 },
    #[error("simplex iteration limit reached after {0} iterations")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Empty when no feasible point was found.
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    pub wall_ms: f64,
    /// False when nodes were evaluated in parallel.
    pub deterministic: bool,
}

impl MilpSolution {
    pub fn is_feasible(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}
