//! Secondary control: state estimation from perceived measurements, droop
//! dispatch of generator setpoints and measurement validation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsError, GovernorForm, SimConfig, Trajectory};
use crate::grid_model::{laplacian, BusId, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfcMode {
    #[default]
    SecondaryDispatch,
    /// Setpoints stay at their initial values.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmAction {
    #[default]
    Continue,
    FreezeDispatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorConfig {
    /// p.u.
    pub load_tol: f64,
    /// Hz
    pub freq_tol_hz: f64,
    pub action: AlarmAction,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self {
            load_tol: 0.05,
            freq_tol_hz: 0.2,
            action: AlarmAction::Continue,
        }
    }
}

impl ValidatorConfig {
    /// False when loads barely moved but frequencies jumped.
    pub fn validate(&self, network: &NetworkModel, prev: &LfcPerception, curr: &LfcPerception) -> bool {
        validate_measurements(prev, curr, self, network.base_frequency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfcPolicy {
    pub mode: LfcMode,
    pub validator: Option<ValidatorConfig>,
}

impl Default for LfcPolicy {
    fn default() -> Self {
        Self {
            mode: LfcMode::SecondaryDispatch,
            validator: Some(ValidatorConfig::default()),
        }
    }
}

impl LfcPolicy {
    pub fn frozen() -> Self {
        Self {
            mode: LfcMode::Frozen,
            validator: None,
        }
    }
}

/// What the controller believes at one cycle. Generator arrays follow
/// `NetworkModel::generators()` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfcPerception {
    pub perceived_loads: Vec<f64>,
    pub perceived_omega: Vec<f64>,
    pub estimated_delta: Vec<f64>,
    pub estimated_gen: Vec<f64>,
    /// Mirror of the governor model on perceived data; not used by dispatch.
    pub estimated_mech: Vec<f64>,
    /// Slack-referenced angles at every bus from the DC flow.
    pub bus_angles: Vec<f64>,
}

/// Precomputed DC-flow estimator for one network.
#[derive(Debug, Clone)]
pub struct LfcEstimator {
    laplacian: DMatrix<f64>,
    gen_bus: Vec<usize>,
    slack_gen: usize,
    load_only: Vec<usize>,
    reduced: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    droop: Vec<f64>,
    time_constant: Vec<f64>,
    has_governor: Vec<bool>,
    cycle_seconds: f64,
    omega_r: f64,
    form: GovernorForm,
}

impl LfcEstimator {
    pub fn new(network: &NetworkModel, sim: &SimConfig) -> Result<Self, DynamicsError> {
        let l = laplacian(network);
        let load_only: Vec<usize> = (0..network.n_buses())
            .filter(|&i| network.generator_at(BusId::from_index(i)).is_none())
            .collect();
        let reduced = if load_only.is_empty() {
            None
        } else {
            let m = load_only.len();
            let a = DMatrix::from_fn(m, m, |r, c| l[(load_only[r], load_only[c])]);
            let lu = a.lu();
            if !lu.is_invertible() {
                return Err(DynamicsError::SingularStep {
                    t: 0,
                    reason: "load bus without connection to any generator".into(),
                });
            }
            Some(lu)
        };
        let gens = network.generators();
        Ok(Self {
            laplacian: l,
            gen_bus: gens.iter().map(|g| g.bus.index()).collect(),
            slack_gen: network.slack_generator(),
            load_only,
            reduced,
            droop: gens.iter().map(|g| g.params.droop).collect(),
            time_constant: gens.iter().map(|g| g.params.governor_time_constant).collect(),
            has_governor: gens.iter().map(|g| g.params.has_governor).collect(),
            cycle_seconds: sim.dt * sim.lfc_period as f64,
            omega_r: network.nominal_omega,
            form: sim.governor_form,
        })
    }

    /// Solves the DC flow with generator-bus angles fixed at `delta_c` and
    /// derives the generation each generator must be supplying.
    pub fn estimate(
        &self,
        perceived_loads: &[f64],
        perceived_omega: &[f64],
        delta_c: &[f64],
        prev_mech: &[f64],
        prev_reference: &[f64],
    ) -> Result<LfcPerception, DynamicsError> {
        let n = self.laplacian.nrows();
        let mut theta = vec![0.0; n];
        for (g, &b) in self.gen_bus.iter().enumerate() {
            theta[b] = if g == self.slack_gen { 0.0 } else { delta_c[g] };
        }
        if let Some(lu) = &self.reduced {
            let q = &self.load_only;
            let rhs = DVector::from_fn(q.len(), |r, _| {
                let i = q[r];
                -perceived_loads[i]
                    - self
                        .gen_bus
                        .iter()
                        .map(|&b| self.laplacian[(i, b)] * theta[b])
                        .sum::<f64>()
            });
            let x = lu.solve(&rhs).ok_or_else(|| DynamicsError::SingularStep {
                t: 0,
                reason: "estimator solve failed".into(),
            })?;
            for (k, &i) in q.iter().enumerate() {
                theta[i] = x[k];
            }
        }
        let estimated_gen: Vec<f64> = self
            .gen_bus
            .iter()
            .map(|&b| {
                perceived_loads[b] + (0..n).map(|j| self.laplacian[(b, j)] * theta[j]).sum::<f64>()
            })
            .collect();
        let estimated_mech = (0..self.gen_bus.len())
            .map(|g| {
                if !self.has_governor[g] {
                    return prev_mech[g];
                }
                let r = self.cycle_seconds / self.time_constant[g];
                let dw = perceived_omega[g] - self.omega_r;
                let target = match self.form {
                    GovernorForm::PaperEq3 => (prev_reference[g] - dw) / self.droop[g],
                    GovernorForm::Standard => prev_reference[g] - dw / self.droop[g],
                };
                (prev_mech[g] + r * target) / (1.0 + r)
            })
            .collect();
        Ok(LfcPerception {
            perceived_loads: perceived_loads.to_vec(),
            perceived_omega: perceived_omega.to_vec(),
            estimated_delta: self.gen_bus.iter().map(|&b| theta[b]).collect(),
            estimated_gen,
            estimated_mech,
            bus_angles: theta,
        })
    }

    /// Setpoints `R * P^{G,C}` (the governor-form-consistent setpoint).
    pub fn dispatch(&self, perception: &LfcPerception) -> Vec<f64> {
        perception
            .estimated_gen
            .iter()
            .zip(&self.droop)
            .map(|(&p, &r)| match self.form {
                GovernorForm::PaperEq3 => r * p,
                GovernorForm::Standard => p,
            })
            .collect()
    }
}

/// One-shot estimate (builds the estimator each call).
pub fn estimate_state(
    network: &NetworkModel,
    sim: &SimConfig,
    perceived_loads: &[f64],
    perceived_omega: &[f64],
    delta_c: &[f64],
) -> Result<LfcPerception, DynamicsError> {
    let est = LfcEstimator::new(network, sim)?;
    let ng = network.n_generators();
    est.estimate(perceived_loads, perceived_omega, delta_c, &vec![0.0; ng], &vec![0.0; ng])
}

/// `P^R_b = R_b * P^{G,C}_b`.
pub fn dispatch(perception: &LfcPerception, network: &NetworkModel) -> Vec<f64> {
    perception
        .estimated_gen
        .iter()
        .zip(network.generators())
        .map(|(&p, g)| g.params.droop * p)
        .collect()
}

/// False iff loads changed by at most `load_tol` while some frequency moved
/// by more than `freq_tol_hz`.
pub fn validate_measurements(
    prev: &LfcPerception,
    curr: &LfcPerception,
    cfg: &ValidatorConfig,
    base_frequency: f64,
) -> bool {
    let dl = prev
        .perceived_loads
        .iter()
        .zip(&curr.perceived_loads)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dw = prev
        .perceived_omega
        .iter()
        .zip(&curr.perceived_omega)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    !(dl <= cfg.load_tol && dw * base_frequency > cfg.freq_tol_hz)
}

/// CSV with columns cycle, bus, p_gc, p_r, valid_flag.
pub fn write_dispatch_log(traj: &Trajectory, network: &NetworkModel, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "cycle,bus,p_gc,p_r,valid_flag")?;
    for (k, (p, r)) in traj.perceptions.iter().zip(&traj.dispatch).enumerate() {
        for (g, gen) in network.generators().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                k, gen.bus, p.estimated_gen[g], r[g], traj.valid[k] as u8
            )?;
        }
    }
    Ok(())
}
