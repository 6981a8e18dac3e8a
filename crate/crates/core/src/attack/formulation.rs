//! Full closed-loop attack model: every plant state per timeslot and every
//! controller quantity per cycle is a variable, tied together by the
//! Backward-Euler rows of the simulator, the DC-flow estimator and the
//! dispatch rule. Relay goals are indicator-activated threshold rows and
//! the objective counts cycles before the first trip.

use nalgebra::DMatrix;

use crate::dynamics::{GovernorForm, RelayKind, StepOperator, Trajectory};
use crate::grid_model::BusId;
use crate::lfc::LfcEstimator;
use crate::optimizer::{
    encode_indicator_tight, solve_milp, BigMConfig, LinExpr, MilpModel, MilpSolution, Sense, VarId,
};

use super::stealth::{add_stealth_rows, InjectionVars};
use super::synth::thresholds;
use super::{AttackError, AttackProblem, AttackVector, Injection};

/// Sanity range for generator frequencies in p.u.; keeps goal big-Ms small.
const OMEGA_RANGE: (f64, f64) = (0.0, 2.0);

/// Forces the trip to a given generator, timeslot and relay kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripTarget {
    pub generator: usize,
    pub timeslot: usize,
    pub kind: RelayKind,
}

#[derive(Debug, Clone)]
pub struct FullAttackModel {
    pub model: MilpModel,
    pub injections: InjectionVars,
    /// `state[t - 1][i]` for t = 1..=timeslots, layout of the step operator.
    pub state: Vec<Vec<VarId>>,
    /// Estimated generation per cycle and generator.
    pub estimated_gen: Vec<Vec<VarId>>,
    /// Dispatched setpoints per cycle and generator.
    pub reference: Vec<Vec<VarId>>,
    /// Goal indicators `(generator, timeslot, kind, binary)`.
    pub trip: Vec<(usize, usize, RelayKind, VarId)>,
    /// Not-yet-tripped indicator per attacked cycle.
    pub not_tripped: Vec<VarId>,
    pub timeslots: usize,
    omega_index: Vec<usize>,
}

/// Affine map perceived loads, generator angles -> estimated generation.
struct EstimatorMap {
    constant: Vec<f64>,
    load: DMatrix<f64>,
    angle: DMatrix<f64>,
}

fn estimator_map(problem: &AttackProblem) -> Result<EstimatorMap, AttackError> {
    let net = &problem.network;
    let est = LfcEstimator::new(net, &problem.sim)?;
    let n = net.n_buses();
    let ng = net.n_generators();
    let w = vec![net.nominal_omega; ng];
    let zero_g = vec![0.0; ng];
    let eval = |loads: &[f64], delta: &[f64]| -> Result<Vec<f64>, AttackError> {
        Ok(est.estimate(loads, &w, delta, &zero_g, &zero_g)?.estimated_gen)
    };
    let constant = eval(&vec![0.0; n], &zero_g)?;
    let mut load = DMatrix::zeros(ng, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let col = eval(&e, &zero_g)?;
        for g in 0..ng {
            load[(g, i)] = col[g] - constant[g];
        }
    }
    let mut angle = DMatrix::zeros(ng, ng);
    for h in 0..ng {
        let mut e = vec![0.0; ng];
        e[h] = 1.0;
        let col = eval(&vec![0.0; n], &e)?;
        for g in 0..ng {
            angle[(g, h)] = col[g] - constant[g];
        }
    }
    Ok(EstimatorMap { constant, load, angle })
}

/// Builds the model for attack windows of `horizon_cycles` cycles. With a
/// `target` the goal binaries are replaced by one hard threshold row and
/// the objective pushes that frequency towards (past) the threshold.
pub fn build_attack_milp(
    problem: &AttackProblem,
    horizon_cycles: usize,
    target: Option<TripTarget>,
) -> Result<FullAttackModel, AttackError> {
    problem.validate()?;
    if horizon_cycles == 0 || horizon_cycles > problem.adversary.max_duration {
        return Err(AttackError::Input(format!(
            "horizon {horizon_cycles} outside 1..={}",
            problem.adversary.max_duration
        )));
    }
    let net = &problem.network;
    let sim = &problem.sim;
    let p = sim.lfc_period;
    let start = problem.adversary.attack_start;
    let end_cycle = start + horizon_cycles;
    let timeslots = (end_cycle * p).min(sim.horizon);
    let n_cycles = timeslots.div_ceil(p);
    let ng = net.n_generators();
    let op = StepOperator::new(net, sim)?;
    let dim = op.state_dim();
    let estimated = (timeslots + 1) * dim + 2 * n_cycles * ng;
    if estimated > problem.options.max_model_vars {
        return Err(AttackError::ModelTooLarge {
            vars: estimated,
            cap: problem.options.max_model_vars,
        });
    }
    if let Some(tg) = target {
        if tg.generator >= ng || tg.timeslot == 0 || tg.timeslot > timeslots {
            return Err(AttackError::Input(format!("target {tg:?} outside the model")));
        }
    }
    let benign = problem.benign_cycle_loads(n_cycles.max(end_cycle));
    let emap = estimator_map(problem)?;
    let lhs = op.implicit_lhs().clone();
    let rhs = op.rhs_terms();
    let omega_index: Vec<usize> = (0..ng).map(|g| op.omega_index(g)).collect();
    let gen_bus: Vec<usize> = net.generators().iter().map(|g| g.bus.index()).collect();
    let scale: Vec<f64> = net
        .generators()
        .iter()
        .map(|g| match sim.governor_form {
            GovernorForm::PaperEq3 => g.params.droop,
            GovernorForm::Standard => 1.0,
        })
        .collect();

    let mut model = MilpModel::new();
    let injections = InjectionVars::add(&mut model, problem, &benign, start, end_cycle.min(n_cycles), false);
    let z0 = op.state_vector(&problem.initial);
    let mut state: Vec<Vec<VarId>> = Vec::with_capacity(timeslots);
    for t in 1..=timeslots {
        state.push(
            (0..dim)
                .map(|i| {
                    let (lo, hi) = if omega_index.contains(&i) {
                        OMEGA_RANGE
                    } else {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    };
                    model.add_continuous(format!("z{i}_t{t}"), lo, hi)
                })
                .collect(),
        );
    }
    // Angle of generator g's bus at timeslot t as (variable, constant).
    let angle_at = |state: &Vec<Vec<VarId>>, g: usize, t: usize| -> LinExpr {
        match op.angle_index(gen_bus[g]) {
            None => LinExpr::new(),
            Some(i) if t == 0 => LinExpr::constant(z0[i]),
            Some(i) => LinExpr::var(state[t - 1][i]),
        }
    };

    let mut estimated_gen = Vec::with_capacity(n_cycles);
    let mut reference = Vec::with_capacity(n_cycles);
    for k in 0..n_cycles {
        let mut pg_row = Vec::with_capacity(ng);
        let mut r_row = Vec::with_capacity(ng);
        for g in 0..ng {
            let pgc = model.add_continuous(format!("pgc_g{g}_c{k}"), f64::NEG_INFINITY, f64::INFINITY);
            let r = model.add_continuous(format!("pr_g{g}_c{k}"), f64::NEG_INFINITY, f64::INFINITY);
            let mut e = LinExpr::var(pgc);
            e.add_constant(-emap.constant[g]);
            for i in 0..net.n_buses() {
                let a = emap.load[(g, i)];
                if a != 0.0 {
                    e.add_scaled(&injections.perceived(&benign, i, k), -a);
                }
            }
            for h in 0..ng {
                let a = emap.angle[(g, h)];
                if a != 0.0 {
                    e.add_scaled(&angle_at(&state, h, k * p), -a);
                }
            }
            model.add_constraint(format!("estimate_g{g}_c{k}"), e, Sense::Eq, 0.0);
            model.add_constraint(
                format!("dispatch_g{g}_c{k}"),
                LinExpr::var(r).with_term(pgc, -scale[g]),
                Sense::Eq,
                0.0,
            );
            pg_row.push(pgc);
            r_row.push(r);
        }
        estimated_gen.push(pg_row);
        reference.push(r_row);
    }

    for t in 0..timeslots {
        let k = t / p;
        let loads = problem.loads.at(t + 1);
        for (row, term) in rhs.iter().enumerate() {
            let mut e = LinExpr::new();
            for c in 0..dim {
                let a = lhs[(row, c)];
                if a != 0.0 {
                    e.add_term(state[t][c], a);
                }
            }
            let mut b = term.constant;
            if let Some(i) = term.state {
                if t == 0 {
                    b += z0[i];
                } else {
                    e.add_term(state[t - 1][i], -1.0);
                }
            }
            if let Some((g, coef)) = term.reference {
                e.add_term(reference[k][g], -coef);
            }
            if let Some(i) = term.load {
                b += loads[i];
            }
            model.add_constraint(format!("step_r{row}_t{}", t + 1), e, Sense::Eq, b);
        }
    }

    let (uf, of) = thresholds(problem);
    let cfg = BigMConfig::default();
    let mut trip = Vec::new();
    let mut not_tripped = Vec::new();
    match target {
        Some(tg) => {
            let w = LinExpr::var(state[tg.timeslot - 1][omega_index[tg.generator]]);
            match tg.kind {
                RelayKind::Uf => {
                    model.add_constraint("trip", w.clone(), Sense::Le, uf);
                    model.set_objective(w);
                }
                RelayKind::Of => {
                    model.add_constraint("trip", w.clone(), Sense::Ge, of);
                    model.set_objective(LinExpr::term(state[tg.timeslot - 1][omega_index[tg.generator]], -1.0));
                }
            }
            for k in start..end_cycle.min(n_cycles) {
                add_stealth_rows(&mut model, problem, &injections, &benign, k, None)?;
            }
        }
        None => {
            let first = start * p + 1;
            for t in first..=timeslots {
                for g in 0..ng {
                    for &kind in problem.goal.kinds() {
                        let y = model.add_binary(format!("trip_{:?}_g{g}_t{t}", kind));
                        let w = state[t - 1][omega_index[g]];
                        let (e, rhs) = match kind {
                            RelayKind::Uf => (LinExpr::var(w), uf),
                            RelayKind::Of => (LinExpr::term(w, -1.0), -of),
                        };
                        encode_indicator_tight(&mut model, format!("goal_{:?}_g{g}_t{t}", kind), y, true, e, rhs, &cfg)?;
                        trip.push((g, t, kind, y));
                    }
                }
            }
            let mut any = LinExpr::new();
            for &(_, _, _, y) in &trip {
                any.add_term(y, 1.0);
            }
            model.add_constraint("goal", any, Sense::Ge, 1.0);
            let mut objective = LinExpr::new();
            for k in start..end_cycle.min(n_cycles) {
                let u = model.add_binary(format!("not_tripped_c{k}"));
                let mut e = LinExpr::var(u);
                for &(_, t, _, y) in &trip {
                    if t <= (k + 1) * p {
                        e.add_term(y, 1.0);
                    }
                }
                model.add_constraint(format!("tripped_by_c{k}"), e, Sense::Ge, 1.0);
                objective.add_term(u, 1.0);
                let gate = not_tripped.last().copied();
                add_stealth_rows(&mut model, problem, &injections, &benign, k, gate)?;
                not_tripped.push(u);
            }
            model.set_objective(objective);
        }
    }
    if model.n_vars() > problem.options.max_model_vars {
        return Err(AttackError::ModelTooLarge {
            vars: model.n_vars(),
            cap: problem.options.max_model_vars,
        });
    }
    Ok(FullAttackModel {
        model,
        injections,
        state,
        estimated_gen,
        reference,
        trip,
        not_tripped,
        timeslots,
        omega_index,
    })
}

impl FullAttackModel {
    pub fn solve(&self, problem: &AttackProblem) -> Result<MilpSolution, AttackError> {
        Ok(solve_milp(&self.model, problem.options.milp_limits(false))?)
    }

    pub fn omega(&self, values: &[f64], g: usize, t: usize) -> f64 {
        values[self.state[t - 1][self.omega_index[g]].0]
    }

    /// First timeslot at which the model trajectory reaches a relay
    /// threshold (inclusive, any generator, any kind).
    pub fn predicted_trip(&self, values: &[f64], problem: &AttackProblem) -> Option<usize> {
        let net = &problem.network;
        let uf = net.hz_to_omega(net.relay.uf_threshold);
        let of = net.hz_to_omega(net.relay.of_threshold);
        (1..=self.timeslots).find(|&t| {
            (0..self.omega_index.len()).any(|g| {
                let w = self.omega(values, g, t);
                w <= uf || w >= of
            })
        })
    }

    pub fn attack_vector(&self, values: &[f64], problem: &AttackProblem) -> AttackVector {
        AttackVector {
            start_cycle: problem.adversary.attack_start,
            injections: self
                .injections
                .iter()
                .filter(|&(_, _, v)| values[v.0] != 0.0)
                .map(|(j, k, v)| Injection {
                    bus: BusId::from_index(j),
                    cycle: k,
                    delta_pu: values[v.0],
                })
                .collect(),
            detector_mode: problem.detector.mode(),
            goal: problem.goal,
            predicted_trip_timeslot: self.predicted_trip(values, problem),
        }
    }

    /// Largest |model - replay| over every plant state variable.
    pub fn max_discrepancy(&self, values: &[f64], problem: &AttackProblem, replay: &Trajectory) -> Result<f64, AttackError> {
        let op = StepOperator::new(&problem.network, &problem.sim)?;
        let mut worst: f64 = 0.0;
        for t in 1..=self.timeslots.min(replay.states.len() - 1) {
            let z = op.state_vector(&replay.states[t]);
            for (v, zi) in self.state[t - 1].iter().zip(&z) {
                worst = worst.max((values[v.0] - zi).abs());
            }
        }
        Ok(worst)
    }
}
