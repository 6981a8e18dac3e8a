//! Backward-Euler primary frequency response with DC power flow, closed by
//! the LFC loop, plus UF/OF relay monitoring.
//!
//! Per generator g (bus b) and bus i, with unknowns at t+1:
//!
//! ```text
//! theta_b' = theta_b + dt (omega_g' - omega_slack')          (non-slack gens)
//! omega_g' = omega_g + dt/(2H) (PM_g' - PG_g' - KD (omega_g' - omega_R))
//! PM_g'    = PM_g + dt/T ((PR_g' - (omega_g' - omega_R)) / R - PM_g')
//! PG_i' - PL_i' = sum_j S_ij (theta_i' - theta_j')
//! ```
//!
//! Angles are referenced to the slack bus (its angle stays 0), so the
//! angle update uses the frequency difference to the slack generator.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::{laplacian, BusId, NetworkModel, RelayConfig};
use crate::lfc::{LfcEstimator, LfcPerception, LfcPolicy, LfcMode, AlarmAction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("singular step system at timeslot {t}: {reason}")]
    SingularStep { t: usize, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GovernorForm {
    /// `(PR - d_omega) / R`
    #[default]
    PaperEq3,
    /// `PR - d_omega / R`
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: usize,
    pub lfc_period: usize,
    pub governor_form: GovernorForm,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 60.0,
            horizon: 3000,
            lfc_period: 60,
            governor_form: GovernorForm::PaperEq3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || self.lfc_period == 0 || self.horizon == 0 {
            return Err(DynamicsError::Input(format!(
                "need dt > 0, lfc_period >= 1, horizon >= 1 (got {}, {}, {})",
                self.dt, self.lfc_period, self.horizon
            )));
        }
        Ok(())
    }

    pub fn n_cycles(&self) -> usize {
        self.horizon.div_ceil(self.lfc_period)
    }

    /// Setpoint the governor tracks in steady state for a given output.
    pub fn equilibrium_reference(&self, droop: f64, gen_power: f64) -> f64 {
        match self.governor_form {
            GovernorForm::PaperEq3 => droop * gen_power,
            GovernorForm::Standard => gen_power,
        }
    }
}

/// Plant state at one timeslot. Generator arrays follow
/// `NetworkModel::generators()` order; `angle` and `load` are per bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub t: usize,
    pub angle: Vec<f64>,
    pub omega: Vec<f64>,
    pub mech_power: Vec<f64>,
    pub gen_power: Vec<f64>,
    pub load: Vec<f64>,
    /// Setpoint in effect for the step that produced this state.
    pub reference: Vec<f64>,
}

impl GridState {
    /// Rotor angle of generator `g` (angle of its bus).
    pub fn delta(&self, network: &NetworkModel, g: usize) -> f64 {
        self.angle[network.generators()[g].bus.index()]
    }

    pub fn is_finite(&self) -> bool {
        [&self.angle, &self.omega, &self.mech_power, &self.gen_power, &self.load]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Balanced operating point for `loads`: generation shared in proportion to
/// 1/R, angles from the DC flow, nominal frequency, governors in steady state.
pub fn equilibrium_state(
    network: &NetworkModel,
    sim: &SimConfig,
    loads: &[f64],
) -> Result<GridState, DynamicsError> {
    let n = network.n_buses();
    if loads.len() != n {
        return Err(DynamicsError::Input(format!("{} loads for {} buses", loads.len(), n)));
    }
    let total: f64 = loads.iter().sum();
    let inv_r: Vec<f64> = network.generators().iter().map(|g| 1.0 / g.params.droop).collect();
    let inv_sum: f64 = inv_r.iter().sum();
    let gen_power: Vec<f64> = inv_r.iter().map(|w| total * w / inv_sum).collect();
    let mut injection: Vec<f64> = loads.iter().map(|l| -l).collect();
    for (g, gen) in network.generators().iter().enumerate() {
        injection[gen.bus.index()] += gen_power[g];
    }
    let angle = solve_angles(network, &injection).ok_or_else(|| DynamicsError::SingularStep {
        t: 0,
        reason: "reduced Laplacian singular (islanded bus)".into(),
    })?;
    let reference = network
        .generators()
        .iter()
        .zip(&gen_power)
        .map(|(g, &p)| sim.equilibrium_reference(g.params.droop, p))
        .collect();
    Ok(GridState {
        t: 0,
        angle,
        omega: vec![network.nominal_omega; network.n_generators()],
        mech_power: gen_power.clone(),
        gen_power,
        load: loads.to_vec(),
        reference,
    })
}

/// Slack-referenced angles with `L theta = injection` (slack row dropped).
fn solve_angles(network: &NetworkModel, injection: &[f64]) -> Option<Vec<f64>> {
    let l = laplacian(network);
    let s = network.slack().index();
    let keep: Vec<usize> = (0..network.n_buses()).filter(|&i| i != s).collect();
    let m = keep.len();
    let mut angle = vec![0.0; network.n_buses()];
    if m == 0 {
        return Some(angle);
    }
    let a = DMatrix::from_fn(m, m, |r, c| l[(keep[r], keep[c])]);
    let b = DVector::from_fn(m, |r, _| injection[keep[r]]);
    let x = a.lu().solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (k, &i) in keep.iter().enumerate() {
        angle[i] = x[k];
    }
    Some(angle)
}

/// Factorized Backward-Euler step for a fixed network and timestep.
#[derive(Debug, Clone)]
pub struct StepOperator {
    dt: f64,
    omega_r: f64,
    n_bus: usize,
    n_gen: usize,
    angle_col: Vec<Option<usize>>,
    lhs: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    // per generator coefficients of the right-hand side
    gen_bus: Vec<usize>,
    slack_gen: usize,
    kd_term: Vec<f64>,
    gov_ref: Vec<f64>,
    gov_omega: Vec<f64>,
    has_governor: Vec<bool>,
}

impl StepOperator {
    pub fn new(network: &NetworkModel, sim: &SimConfig) -> Result<Self, DynamicsError> {
        sim.validate()?;
        let dt = sim.dt;
        let n = network.n_buses();
        let ng = network.n_generators();
        let slack = network.slack().index();
        let mut angle_col = vec![None; n];
        let mut col = 0;
        for (i, c) in angle_col.iter_mut().enumerate() {
            if i != slack {
                *c = Some(col);
                col += 1;
            }
        }
        let w0 = n - 1;
        let pm0 = w0 + ng;
        let pg0 = pm0 + ng;
        let dim = pg0 + ng;
        let slack_gen = network.slack_generator();
        let l = laplacian(network);
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut row = 0;
        let gen_bus: Vec<usize> = network.generators().iter().map(|g| g.bus.index()).collect();
        for g in 0..ng {
            if g == slack_gen {
                continue;
            }
            let c = angle_col[gen_bus[g]].expect("non-slack generator bus has an angle");
            a[(row, c)] = 1.0;
            a[(row, w0 + g)] = -dt;
            a[(row, w0 + slack_gen)] += dt;
            row += 1;
        }
        let mut kd_term = Vec::with_capacity(ng);
        let mut gov_ref = Vec::with_capacity(ng);
        let mut gov_omega = Vec::with_capacity(ng);
        let mut has_governor = Vec::with_capacity(ng);
        for (g, gen) in network.generators().iter().enumerate() {
            let p = gen.params;
            let k = dt / (2.0 * p.inertia);
            a[(row, w0 + g)] = 1.0 + k * p.damping;
            a[(row, pm0 + g)] = -k;
            a[(row, pg0 + g)] = k;
            kd_term.push(k * p.damping);
            row += 1;

            if p.has_governor {
                let r = dt / p.governor_time_constant;
                a[(row, pm0 + g)] = 1.0 + r;
                a[(row, w0 + g)] = r / p.droop;
                gov_omega.push(r / p.droop);
                gov_ref.push(match sim.governor_form {
                    GovernorForm::PaperEq3 => r / p.droop,
                    GovernorForm::Standard => r,
                });
            } else {
                a[(row, pm0 + g)] = 1.0;
                gov_omega.push(0.0);
                gov_ref.push(0.0);
            }
            has_governor.push(p.has_governor);
            row += 1;
        }
        for i in 0..n {
            if let Some(g) = network.generator_at(BusId::from_index(i)) {
                a[(row, pg0 + g)] = 1.0;
            }
            for j in 0..n {
                if let Some(c) = angle_col[j] {
                    a[(row, c)] -= l[(i, j)];
                }
            }
            row += 1;
        }
        debug_assert_eq!(row, dim);
        let lu = a.clone().lu();
        if !lu.is_invertible() || rcond_estimate(&a, &lu) < 1e-13 {
            return Err(DynamicsError::SingularStep {
                t: 0,
                reason: "step matrix is singular (islanded bus or zero susceptance)".into(),
            });
        }
        Ok(Self {
            dt,
            omega_r: network.nominal_omega,
            n_bus: n,
            n_gen: ng,
            angle_col,
            lhs: a,
            lu,
            gen_bus,
            slack_gen,
            kd_term,
            gov_ref,
            gov_omega,
            has_governor,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Length of the stacked state `[non-slack angles, omega, p_m, p_g]`.
    pub(crate) fn state_dim(&self) -> usize {
        self.n_bus - 1 + 3 * self.n_gen
    }

    /// Position of bus `i`'s angle in the stacked state (slack has none).
    pub(crate) fn angle_index(&self, i: usize) -> Option<usize> {
        self.angle_col[i]
    }

    pub(crate) fn omega_index(&self, g: usize) -> usize {
        self.n_bus - 1 + g
    }

    pub(crate) fn state_vector(&self, s: &GridState) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.state_dim());
        z.extend((0..self.n_bus).filter(|&i| self.angle_col[i].is_some()).map(|i| s.angle[i]));
        z.extend(&s.omega);
        z.extend(&s.mech_power);
        z.extend(&s.gen_power);
        z
    }

    /// Left-hand matrix of the implicit step `lhs * z' = rhs`.
    pub(crate) fn implicit_lhs(&self) -> &DMatrix<f64> {
        &self.lhs
    }

    /// Right-hand side of the implicit step, row by row, as an affine
    /// function of the previous state, the setpoints and the new loads.
    pub(crate) fn rhs_terms(&self) -> Vec<RhsTerm> {
        let w0 = self.n_bus - 1;
        let pm0 = w0 + self.n_gen;
        let mut out = Vec::with_capacity(self.state_dim());
        for g in 0..self.n_gen {
            if g == self.slack_gen {
                continue;
            }
            out.push(RhsTerm {
                state: self.angle_col[self.gen_bus[g]],
                ..Default::default()
            });
        }
        for g in 0..self.n_gen {
            out.push(RhsTerm {
                state: Some(w0 + g),
                constant: self.kd_term[g] * self.omega_r,
                ..Default::default()
            });
            out.push(if self.has_governor[g] {
                RhsTerm {
                    state: Some(pm0 + g),
                    reference: Some((g, self.gov_ref[g])),
                    constant: self.gov_omega[g] * self.omega_r,
                    ..Default::default()
                }
            } else {
                RhsTerm {
                    state: Some(pm0 + g),
                    ..Default::default()
                }
            });
        }
        for i in 0..self.n_bus {
            out.push(RhsTerm {
                load: Some(i),
                ..Default::default()
            });
        }
        out
    }

    /// Advances `state` one timeslot with setpoints `reference` and true
    /// `loads` applied at t+1.
    pub fn step(
        &self,
        state: &GridState,
        reference: &[f64],
        loads: &[f64],
    ) -> Result<GridState, DynamicsError> {
        let ng = self.n_gen;
        let n = self.n_bus;
        if reference.len() != ng || loads.len() != n {
            return Err(DynamicsError::Input("dispatch/load size mismatch".into()));
        }
        let dim = n - 1 + 3 * ng;
        let mut b = DVector::<f64>::zeros(dim);
        let mut row = 0;
        for g in 0..ng {
            if g == self.slack_gen {
                continue;
            }
            b[row] = state.angle[self.gen_bus[g]];
            row += 1;
        }
        for g in 0..ng {
            b[row] = state.omega[g] + self.kd_term[g] * self.omega_r;
            row += 1;
            b[row] = if self.has_governor[g] {
                state.mech_power[g] + self.gov_ref[g] * reference[g] + self.gov_omega[g] * self.omega_r
            } else {
                state.mech_power[g]
            };
            row += 1;
        }
        for l in loads {
            b[row] = *l;
            row += 1;
        }
        let x = self.lu.solve(&b).ok_or_else(|| DynamicsError::SingularStep {
            t: state.t,
            reason: "factorization failed".into(),
        })?;
        let mut angle = vec![0.0; n];
        for (i, c) in self.angle_col.iter().enumerate() {
            if let Some(c) = c {
                angle[i] = x[*c];
            }
        }
        let w0 = n - 1;
        let next = GridState {
            t: state.t + 1,
            angle,
            omega: x.rows(w0, ng).iter().copied().collect(),
            mech_power: x.rows(w0 + ng, ng).iter().copied().collect(),
            gen_power: x.rows(w0 + 2 * ng, ng).iter().copied().collect(),
            load: loads.to_vec(),
            reference: reference.to_vec(),
        };
        if !next.is_finite() {
            return Err(DynamicsError::SingularStep {
                t: state.t,
                reason: "non-finite state".into(),
            });
        }
        Ok(next)
    }
}

/// One right-hand-side entry: `z[state] + coef * reference[g] + load[bus] + constant`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct RhsTerm {
    pub state: Option<usize>,
    pub reference: Option<(usize, f64)>,
    pub load: Option<usize>,
    pub constant: f64,
}

/// Cheap reciprocal-condition proxy from the LU diagonal.
fn rcond_estimate(a: &DMatrix<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 || a.nrows() == 0 {
        return 0.0;
    }
    min / max
}

/// One Backward-Euler step (factorizes on every call; use [`StepOperator`]
/// in loops).
pub fn step_primary(
    state: &GridState,
    network: &NetworkModel,
    sim: &SimConfig,
    reference: &[f64],
    loads: &[f64],
) -> Result<GridState, DynamicsError> {
    StepOperator::new(network, sim)?.step(state, reference, loads)
}

/// True per-bus loads over time.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadProfile {
    Constant(Vec<f64>),
    /// One row per timeslot; the last row is held past the end.
    Timeslots(Vec<Vec<f64>>),
}

impl LoadProfile {
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            LoadProfile::Constant(v) => v,
            LoadProfile::Timeslots(rows) => &rows[t.min(rows.len() - 1)],
        }
    }

    /// Builds a per-timeslot table by holding each cycle value for
    /// `period` timeslots.
    pub fn from_cycles(cycles: &[Vec<f64>], period: usize) -> Self {
        let mut rows = Vec::with_capacity(cycles.len() * period);
        for c in cycles {
            for _ in 0..period {
                rows.push(c.clone());
            }
        }
        LoadProfile::Timeslots(rows)
    }

    pub fn covers(&self, horizon: usize) -> bool {
        match self {
            LoadProfile::Constant(_) => true,
            LoadProfile::Timeslots(rows) => rows.len() > horizon || rows.len() == horizon,
        }
    }

    pub fn n_buses(&self) -> usize {
        self.at(0).len()
    }
}

/// Additive offsets on perceived loads, `offsets[cycle][bus]`. Cycles past
/// the end carry no offset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionSchedule {
    pub offsets: Vec<Vec<f64>>,
}

impl InjectionSchedule {
    pub fn at(&self, cycle: usize) -> Option<&[f64]> {
        self.offsets.get(cycle).map(|v| v.as_slice())
    }

    /// Keeps only cycles before `end`.
    pub fn truncated(&self, end: usize) -> Self {
        Self {
            offsets: self.offsets.iter().take(end).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelayKind {
    #[serde(rename = "UF")]
    Uf,
    #[serde(rename = "OF")]
    Of,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayEvent {
    pub bus: BusId,
    pub kind: RelayKind,
    pub timeslot: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GridState>,
    /// Setpoints chosen at each LFC cycle.
    pub dispatch: Vec<Vec<f64>>,
    pub perceptions: Vec<LfcPerception>,
    /// Validator verdict per cycle (`true` = measurements accepted).
    pub valid: Vec<bool>,
    pub relay_events: Vec<RelayEvent>,
    pub lfc_period: usize,
}

impl Trajectory {
    pub fn first_trip(&self) -> Option<&RelayEvent> {
        self.relay_events.first()
    }

    pub fn final_state(&self) -> &GridState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Largest |f - f_nominal| over generators at the last timeslot, Hz.
    pub fn final_max_deviation_hz(&self, network: &NetworkModel) -> f64 {
        self.final_state()
            .omega
            .iter()
            .map(|w| network.omega_to_hz((w - network.nominal_omega).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with columns t, bus, delta_rad, omega_pu, freq_hz, p_m, p_g, p_l, p_r.
    pub fn write_csv(&self, network: &NetworkModel, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,bus,delta_rad,omega_pu,freq_hz,p_m,p_g,p_l,p_r")?;
        for s in &self.states {
            for bus in network.bus_ids() {
                let i = bus.index();
                match network.generator_at(bus) {
                    Some(g) => writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        s.t,
                        bus,
                        s.angle[i],
                        s.omega[g],
                        network.omega_to_hz(s.omega[g]),
                        s.mech_power[g],
                        s.gen_power[g],
                        s.load[i],
                        s.reference[g]
                    )?,
                    None => writeln!(out, "{},{},{},,,,,{},", s.t, bus, s.angle[i], s.load[i])?,
                }
            }
        }
        Ok(())
    }
}

/// Scans a trajectory for the first UF and OF crossing of every generator.
pub fn check_relays(
    states: &[GridState],
    network: &NetworkModel,
    relay: &RelayConfig,
) -> Vec<RelayEvent> {
    let mut monitor = RelayMonitor::new(network, *relay);
    for s in states {
        monitor.observe(s);
    }
    monitor.into_events()
}

/// Incremental relay latch used while a trajectory is being produced.
#[derive(Debug, Clone)]
pub struct RelayMonitor {
    relay: RelayConfig,
    base: f64,
    gen_bus: Vec<BusId>,
    tripped: Vec<[bool; 2]>,
    events: Vec<RelayEvent>,
}

impl RelayMonitor {
    pub fn new(network: &NetworkModel, relay: RelayConfig) -> Self {
        Self {
            relay,
            base: network.base_frequency,
            gen_bus: network.generators().iter().map(|g| g.bus).collect(),
            tripped: vec![[false; 2]; network.n_generators()],
            events: Vec::new(),
        }
    }

    pub fn observe(&mut self, s: &GridState) {
        for (g, &w) in s.omega.iter().enumerate() {
            let f = w * self.base;
            let kinds = [
                (RelayKind::Uf, f <= self.relay.uf_threshold),
                (RelayKind::Of, f >= self.relay.of_threshold),
            ];
            for (k, (kind, hit)) in kinds.into_iter().enumerate() {
                if hit && !self.tripped[g][k] {
                    self.tripped[g][k] = true;
                    self.events.push(RelayEvent {
                        bus: self.gen_bus[g],
                        kind,
                        timeslot: s.t,
                        frequency: f,
                    });
                }
            }
        }
    }

    pub fn into_events(self) -> Vec<RelayEvent> {
        self.events
    }
}

/// Closed-loop simulation: the plant runs on true loads; every
/// `lfc_period` timeslots the LFC estimates the state from perceived loads
/// (true loads plus `injection`) and perceived frequencies, then dispatches
/// setpoints held until the next cycle.
pub fn run_horizon(
    network: &NetworkModel,
    initial: &GridState,
    sim: &SimConfig,
    loads: &LoadProfile,
    policy: &LfcPolicy,
    injection: Option<&InjectionSchedule>,
) -> Result<Trajectory, DynamicsError> {
    let op = StepOperator::new(network, sim)?;
    let est = LfcEstimator::new(network, sim)?;
    run_horizon_with(network, &op, &est, initial, sim, loads, policy, injection)
}

/// [`run_horizon`] with prebuilt operators (avoids refactorizing in sweeps).
#[allow(clippy::too_many_arguments)]
pub fn run_horizon_with(
    network: &NetworkModel,
    op: &StepOperator,
    est: &LfcEstimator,
    initial: &GridState,
    sim: &SimConfig,
    loads: &LoadProfile,
    policy: &LfcPolicy,
    injection: Option<&InjectionSchedule>,
) -> Result<Trajectory, DynamicsError> {
    sim.validate()?;
    if loads.n_buses() != network.n_buses() || !loads.covers(sim.horizon) {
        return Err(DynamicsError::Input("load source does not cover the horizon".into()));
    }
    let p = sim.lfc_period;
    let n_cycles = sim.n_cycles();
    let slack_gen = network.slack_generator();
    let mut monitor = RelayMonitor::new(network, network.relay);
    let mut states = Vec::with_capacity(sim.horizon + 1);
    let mut dispatch = Vec::with_capacity(n_cycles);
    let mut perceptions: Vec<LfcPerception> = Vec::with_capacity(n_cycles);
    let mut valid = Vec::with_capacity(n_cycles);

    let mut state = initial.clone();
    monitor.observe(&state);
    // The controller's angle estimate starts from the plant's true angles.
    let mut delta_c: Vec<f64> = (0..network.n_generators()).map(|g| state.delta(network, g)).collect();
    let mut reference = initial.reference.clone();
    let mut mech_c = initial.mech_power.clone();
    states.push(state.clone());

    for t in 0..sim.horizon {
        if t % p == 0 {
            let cycle = t / p;
            let mut perceived = loads.at(t).to_vec();
            if let Some(off) = injection.and_then(|inj| inj.at(cycle)) {
                for (l, o) in perceived.iter_mut().zip(off) {
                    *l += o;
                }
            }
            let omega_c = state.omega.clone();
            let perception = est.estimate(&perceived, &omega_c, &delta_c, &mech_c, &reference)?;
            let ok = match (&policy.validator, perceptions.last()) {
                (Some(v), Some(prev)) => v.validate(network, prev, &perception),
                _ => true,
            };
            let frozen = policy.mode == LfcMode::Frozen
                || (!ok
                    && policy
                        .validator
                        .is_some_and(|v| v.action == AlarmAction::FreezeDispatch));
            if !frozen {
                reference = est.dispatch(&perception);
            }
            mech_c = perception.estimated_mech.clone();
            dispatch.push(reference.clone());
            perceptions.push(perception);
            valid.push(ok);
        }
        let next = op.step(&state, &reference, loads.at(t + 1))?;
        // Perceived frequencies are the plant's (loads are the only
        // channel under attack); integrate them like the plant does.
        for g in 0..network.n_generators() {
            if g != slack_gen {
                delta_c[g] += sim.dt * (next.omega[g] - next.omega[slack_gen]);
            }
        }
        monitor.observe(&next);
        state = next;
        states.push(state.clone());
    }
    Ok(Trajectory {
        states,
        dispatch,
        perceptions,
        valid,
        relay_events: monitor.into_events(),
        lfc_period: p,
    })
}
