//! Stealthy false-data-injection synthesis against the LFC loop.
//!
//! The attacker adds offsets to the load measurements the LFC perceives.
//! Offsets are bounded by the detector in force (deviation rule, trained
//! hulls, or nothing but a sanity box) and restricted to accessible buses.
//! The goal is the earliest timeslot at which some generator frequency
//! reaches an under- or over-frequency relay threshold.

pub mod formulation;
pub mod replay;
pub mod resiliency;
pub mod response;
pub mod stealth;
pub mod synth;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adm::{AdmModel, BddRule};
use crate::dynamics::{DynamicsError, GridState, InjectionSchedule, LoadProfile, RelayEvent, RelayKind, SimConfig};
use crate::grid_model::{BusId, NetworkModel};
use crate::lfc::{AlarmAction, LfcMode, LfcPolicy};
use crate::optimizer::{MilpLimits, OptError};
use crate::par::Execution;

pub use formulation::{build_attack_milp, FullAttackModel, TripTarget};
pub use replay::{replay_attack, ReplayReport};
pub use resiliency::{k_resiliency, BoundKind, ResiliencyResult};
pub use response::ResponseModel;
pub use synth::{find_min_trip_time, find_min_trip_time_with, trip_feasibility_map};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error("model has {vars} variables, cap is {cap}")]
    ModelTooLarge { vars: usize, cap: usize },
    #[error("replay disagrees with synthesis: {0}")]
    VerificationMismatch(String),
    #[error("{subsets} subsets of size {k} exceed the budget of {budget}")]
    CombinatorialBudgetExceeded { k: usize, subsets: u128, budget: usize },
    #[error("invalid attack input: {0}")]
    Input(String),
    #[error("attack file: {0}")]
    Io(#[from] std::io::Error),
    #[error("attack json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    None,
    RulesBdd,
    MlAdm,
}

impl DetectorMode {
    pub fn label(self) -> &'static str {
        match self {
            DetectorMode::None => "none",
            DetectorMode::RulesBdd => "rules_bdd",
            DetectorMode::MlAdm => "ml_adm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Uf,
    Of,
    Either,
}

impl Goal {
    pub fn kinds(self) -> &'static [RelayKind] {
        match self {
            Goal::Uf => &[RelayKind::Uf],
            Goal::Of => &[RelayKind::Of],
            Goal::Either => &[RelayKind::Uf, RelayKind::Of],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Goal::Uf => "uf",
            Goal::Of => "of",
            Goal::Either => "either",
        }
    }
}

/// Detector the attacker has to evade.
#[derive(Debug, Clone)]
pub enum Detector {
    None,
    Bdd(BddRule),
    Adm(Arc<AdmModel>),
}

impl Detector {
    pub fn mode(&self) -> DetectorMode {
        match self {
            Detector::None => DetectorMode::None,
            Detector::Bdd(_) => DetectorMode::RulesBdd,
            Detector::Adm(_) => DetectorMode::MlAdm,
        }
    }

    /// Number of past cycles a detector check looks at.
    pub fn lookback(&self) -> usize {
        match self {
            Detector::None => 0,
            Detector::Bdd(_) => 1,
            Detector::Adm(m) => m.lookback(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryModel {
    /// One flag per bus.
    pub accessibility: Vec<bool>,
    /// First LFC cycle whose perception can be altered.
    pub attack_start: usize,
    /// Longest attack window, in LFC cycles.
    pub max_duration: usize,
}

impl AdversaryModel {
    pub fn all_buses(n_buses: usize, attack_start: usize, max_duration: usize) -> Self {
        Self {
            accessibility: vec![true; n_buses],
            attack_start,
            max_duration,
        }
    }

    pub fn with_access(n_buses: usize, buses: &[BusId], attack_start: usize, max_duration: usize) -> Self {
        let mut accessibility = vec![false; n_buses];
        for b in buses {
            accessibility[b.index()] = true;
        }
        Self {
            accessibility,
            attack_start,
            max_duration,
        }
    }

    pub fn accessible(&self) -> Vec<BusId> {
        self.accessibility
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| BusId::from_index(i))
            .collect()
    }

    pub fn validate(&self, network: &NetworkModel) -> Result<(), AttackError> {
        if self.accessibility.len() != network.n_buses() {
            return Err(AttackError::Input(format!(
                "accessibility has {} entries for {} buses",
                self.accessibility.len(),
                network.n_buses()
            )));
        }
        if self.max_duration == 0 {
            return Err(AttackError::Input("max_duration must be at least one cycle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    /// Per-bus, per-cycle bound on |injection| in p.u.
    pub injection_bound: f64,
    /// Frequencies must cross the relay threshold by this much (p.u.).
    pub trip_margin: f64,
    /// Detector rows are tightened by this much so replays stay inside.
    pub stealth_margin: f64,
    pub max_model_vars: usize,
    pub max_nodes: usize,
    pub exec: Execution,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            injection_bound: 0.5,
            trip_margin: 1e-6,
            stealth_margin: 1e-9,
            max_model_vars: 50_000,
            max_nodes: 20_000,
            exec: Execution::default(),
        }
    }
}

impl SynthesisOptions {
    pub fn milp_limits(&self, first_feasible: bool) -> MilpLimits {
        MilpLimits {
            max_nodes: self.max_nodes,
            time_limit: None,
            first_feasible,
        }
    }
}

/// Everything a synthesis run depends on.
#[derive(Debug, Clone)]
pub struct AttackProblem {
    pub network: NetworkModel,
    pub sim: SimConfig,
    pub initial: GridState,
    /// True loads; the plant always runs on these.
    pub loads: LoadProfile,
    pub policy: LfcPolicy,
    pub adversary: AdversaryModel,
    pub detector: Detector,
    pub goal: Goal,
    pub options: SynthesisOptions,
}

impl AttackProblem {
    pub fn validate(&self) -> Result<(), AttackError> {
        self.sim.validate()?;
        self.adversary.validate(&self.network)?;
        if self.policy.mode != LfcMode::SecondaryDispatch {
            return Err(AttackError::Input("synthesis needs an active secondary dispatch".into()));
        }
        if self
            .policy
            .validator
            .is_some_and(|v| v.action == AlarmAction::FreezeDispatch)
        {
            return Err(AttackError::Input(
                "synthesis assumes the measurement validator does not alter dispatch".into(),
            ));
        }
        if self.adversary.attack_start * self.sim.lfc_period >= self.sim.horizon {
            return Err(AttackError::Input("attack starts after the simulation horizon".into()));
        }
        if !(self.options.injection_bound > 0.0) {
            return Err(AttackError::Input("injection bound must be positive".into()));
        }
        Ok(())
    }

    /// Last timeslot the attack window can reach.
    pub fn last_timeslot(&self) -> usize {
        let end = (self.adversary.attack_start + self.adversary.max_duration) * self.sim.lfc_period;
        end.min(self.sim.horizon)
    }

    /// Perceived loads without attack, per LFC cycle.
    pub fn benign_cycle_loads(&self, n_cycles: usize) -> Vec<Vec<f64>> {
        (0..n_cycles)
            .map(|k| self.loads.at(k * self.sim.lfc_period).to_vec())
            .collect()
    }

    pub fn with_accessibility(&self, accessibility: Vec<bool>) -> Self {
        let mut p = self.clone();
        p.adversary.accessibility = accessibility;
        p
    }

    pub fn with_detector(&self, detector: Detector) -> Self {
        let mut p = self.clone();
        p.detector = detector;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub bus: BusId,
    pub cycle: usize,
    pub delta_pu: f64,
}

/// Attack vector file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    pub start_cycle: usize,
    pub injections: Vec<Injection>,
    pub detector_mode: DetectorMode,
    pub goal: Goal,
    pub predicted_trip_timeslot: Option<usize>,
}

impl AttackVector {
    /// Dense `[cycle][bus]` offsets covering every injected cycle.
    pub fn schedule(&self, n_buses: usize) -> InjectionSchedule {
        let n_cycles = self.injections.iter().map(|i| i.cycle + 1).max().unwrap_or(0);
        let mut offsets = vec![vec![0.0; n_buses]; n_cycles];
        for i in &self.injections {
            offsets[i.cycle][i.bus.index()] += i.delta_pu;
        }
        InjectionSchedule { offsets }
    }

    /// Attacked measurements `benign + injection` per cycle.
    pub fn attacked_measurements(&self, benign: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = benign.to_vec();
        for i in &self.injections {
            if let Some(row) = out.get_mut(i.cycle) {
                row[i.bus.index()] += i.delta_pu;
            }
        }
        out
    }

    /// Keeps only injections before cycle `end`.
    pub fn truncated(&self, end: usize) -> Self {
        let mut a = self.clone();
        a.injections.retain(|i| i.cycle < end);
        a
    }

    pub fn last_cycle(&self) -> Option<usize> {
        self.injections.iter().map(|i| i.cycle).max()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AttackError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AttackError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AttackError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub horizons: usize,
    pub lp_solves: usize,
    /// Candidates ruled out by a bound from a neighbouring solve.
    pub screened: usize,
    pub milp_solves: usize,
    pub milp_nodes: usize,
    /// Candidates whose branch-and-bound hit a limit without an answer.
    pub inconclusive: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub attack: Option<AttackVector>,
    pub trip_event: Option<RelayEvent>,
    pub trip_timeslot: Option<usize>,
    pub lfc_cycles_to_goal: Option<usize>,
    pub stats: SolveStats,
}

impl SynthesisResult {
    pub fn is_feasible(&self) -> bool {
        self.attack.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_json_round_trip() {
        let v = AttackVector {
            start_cycle: 1,
            injections: vec![Injection {
                bus: BusId(3),
                cycle: 1,
                delta_pu: 0.04,
            }],
            detector_mode: DetectorMode::RulesBdd,
            goal: Goal::Uf,
            predicted_trip_timeslot: Some(181),
        };
        let text = v.to_json();
        assert!(text.contains("\"rules_bdd\""));
        assert!(text.contains("\"delta_pu\""));
        assert_eq!(AttackVector::from_json(&text).unwrap(), v);
        let s = v.schedule(3);
        assert_eq!(s.offsets, vec![vec![0.0; 3], vec![0.0, 0.0, 0.04]]);
    }
}
