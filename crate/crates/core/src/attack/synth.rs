//! Minimal-trip-time search.
//!
//! Horizons are extended one cycle at a time. For horizon h the candidate
//! trip timeslots are those of the last attacked cycle, scanned in order;
//! for each (timeslot, generator, relay kind) the extreme frequency over
//! the stealthy injection set is computed by LP (warm-started across
//! candidates) or, with several hull clusters, by branch-and-bound. Since
//! every earlier candidate was infeasible, the first feasible one is the
//! earliest possible trip.

use std::time::Instant;

use crate::dynamics::{RelayEvent, RelayKind};
use crate::grid_model::BusId;
use crate::optimizer::{solve_milp, LinExpr, LpStatus, LpWorkspace, MilpModel, Sense, SolveStatus, VarId};

use super::response::ResponseModel;
use super::stealth::{add_stealth_rows, InjectionVars};
use super::{AttackError, AttackProblem, AttackVector, Detector, Injection, SolveStats, SynthesisResult};

pub fn find_min_trip_time(problem: &AttackProblem) -> Result<SynthesisResult, AttackError> {
    let response = ResponseModel::new(problem)?;
    find_min_trip_time_with(problem, &response)
}

/// Stealth model for injections in cycles `start..=last`.
pub(crate) fn stealth_model(
    problem: &AttackProblem,
    benign: &[Vec<f64>],
    last: usize,
) -> Result<(MilpModel, InjectionVars), AttackError> {
    let start = problem.adversary.attack_start;
    let mut model = MilpModel::new();
    let vars = InjectionVars::add(&mut model, problem, benign, start, last + 1, true);
    for k in start..=last {
        add_stealth_rows(&mut model, problem, &vars, benign, k, None)?;
    }
    if model.n_vars() > problem.options.max_model_vars {
        return Err(AttackError::ModelTooLarge {
            vars: model.n_vars(),
            cap: problem.options.max_model_vars,
        });
    }
    Ok((model, vars))
}

/// Number of detector rows when every cycle of the attack window is attacked.
pub fn stealth_model_rows(problem: &AttackProblem) -> Result<usize, AttackError> {
    let start = problem.adversary.attack_start;
    let end = start + problem.adversary.max_duration;
    let benign = problem.benign_cycle_loads(end);
    let (model, _) = stealth_model(problem, &benign, end - 1)?;
    Ok(model.constraints.len())
}

/// Relay thresholds in p.u. frequency, including the crossing margin.
pub(crate) fn thresholds(problem: &AttackProblem) -> (f64, f64) {
    let net = &problem.network;
    let m = problem.options.trip_margin;
    (
        net.hz_to_omega(net.relay.uf_threshold) - m,
        net.hz_to_omega(net.relay.of_threshold) + m,
    )
}

/// [`find_min_trip_time`] with a precomputed response model (reused across
/// accessibility subsets and detectors).
pub fn find_min_trip_time_with(
    problem: &AttackProblem,
    response: &ResponseModel,
) -> Result<SynthesisResult, AttackError> {
    let clock = Instant::now();
    let mut stats = SolveStats::default();
    let mut found = None;
    scan(problem, response, false, &mut stats, &mut |hit| {
        found = Some(hit);
        false
    })?;
    stats.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    let Some(hit) = found else {
        return Ok(SynthesisResult {
            attack: None,
            trip_event: None,
            trip_timeslot: None,
            lfc_cycles_to_goal: None,
            stats,
        });
    };
    let p = problem.sim.lfc_period;
    let t = hit.event.timeslot;
    Ok(SynthesisResult {
        attack: Some(hit.attack),
        trip_event: Some(hit.event),
        trip_timeslot: Some(t),
        lfc_cycles_to_goal: Some(t.div_ceil(p)),
        stats,
    })
}

/// Every timeslot of the attack window at which some stealthy attack can
/// trip a relay, in order. Unlike [`find_min_trip_time`] this solves every
/// candidate of the window, so its cost depends only on the window length
/// and the detector's row count.
pub fn trip_feasibility_map(problem: &AttackProblem) -> Result<(Vec<usize>, SolveStats), AttackError> {
    let clock = Instant::now();
    let response = ResponseModel::new(problem)?;
    let mut stats = SolveStats::default();
    let mut hits = Vec::new();
    scan(problem, &response, true, &mut stats, &mut |hit| {
        if hits.last() != Some(&hit.event.timeslot) {
            hits.push(hit.event.timeslot);
        }
        true
    })?;
    stats.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok((hits, stats))
}

struct Hit {
    attack: AttackVector,
    event: RelayEvent,
}

/// One independently solvable piece of the stealth model. Detector rows
/// never couple buses, so without cluster selectors every accessible bus is
/// its own LP and the extreme frequency is the sum of the per-bus extremes.
struct Part {
    model: MilpModel,
    vars: InjectionVars,
    ws: LpWorkspace,
    reach: Vec<f64>,
    c: Vec<f64>,
    /// Last solved objective per (generator, relay kind).
    last: Vec<Option<(Vec<f64>, f64)>>,
    x: Vec<f64>,
}

impl Part {
    fn new(problem: &AttackProblem, benign: &[Vec<f64>], k_last: usize, slots: usize) -> Result<Self, AttackError> {
        let (model, vars) = stealth_model(problem, benign, k_last)?;
        let ws = LpWorkspace::new(&model)?;
        let reach = model.vars.iter().map(|v| v.lower.abs().max(v.upper.abs())).collect();
        let n = model.n_vars();
        Ok(Self {
            model,
            vars,
            ws,
            reach,
            c: vec![0.0; n],
            last: vec![None; slots],
            x: vec![0.0; n],
        })
    }

    fn set_objective(&mut self, response: &ResponseModel, g: usize, t: usize, sign: f64) {
        self.c.iter_mut().for_each(|v| *v = 0.0);
        for (j, k, v) in self.vars.iter() {
            self.c[v.0] = sign * response.coefficient(j, k, g, t);
        }
    }

    /// Lower bounds on `min c x`: from the variable box alone, and from the
    /// previous solve of the same slot.
    fn bound(&self, slot: usize) -> f64 {
        let boxed = -self.c.iter().zip(&self.reach).map(|(a, u)| a.abs() * u).sum::<f64>();
        match &self.last[slot] {
            Some((c_ref, obj_ref)) => {
                let drift: f64 = self
                    .c
                    .iter()
                    .zip(c_ref)
                    .zip(&self.reach)
                    .map(|((a, b), u)| (a - b).abs() * u)
                    .sum();
                boxed.max(obj_ref - drift)
            }
            None => boxed,
        }
    }
}

/// Walks the candidates in timeslot order and hands each timeslot's first
/// feasible attack to `on_hit`, which returns whether to continue.
///
/// Unless `exhaustive`, a candidate is skipped when a bound proves it out
/// of reach: with `|x_i| <= u_i`, `min c'x >= min cx - sum |c'_i - c_i| u_i`
/// for the previous solve `c` of the same generator and relay kind.
fn scan(
    problem: &AttackProblem,
    response: &ResponseModel,
    exhaustive: bool,
    stats: &mut SolveStats,
    on_hit: &mut dyn FnMut(Hit) -> bool,
) -> Result<(), AttackError> {
    problem.validate()?;
    let accessible = problem.adversary.accessible();
    if accessible.is_empty() {
        return Ok(());
    }
    let n_bus = problem.network.n_buses();
    let p = problem.sim.lfc_period;
    let start = problem.adversary.attack_start;
    let last_t = problem.last_timeslot().min(response.last_timeslot());
    let benign = problem.benign_cycle_loads(start + problem.adversary.max_duration);
    let (uf, of) = thresholds(problem);
    let gens = problem.network.generators();
    let slots = gens.len() * 2;
    let integral = match &problem.detector {
        Detector::Adm(adm) => accessible.iter().any(|&b| adm.hulls(b).len() > 1),
        _ => false,
    };

    for h in 1..=problem.adversary.max_duration {
        let k_last = start + h - 1;
        let t_lo = k_last * p + 1;
        if t_lo > last_t {
            break;
        }
        let t_hi = ((k_last + 1) * p).min(last_t);
        stats.horizons += 1;
        let mut parts = if integral {
            vec![Part::new(problem, &benign, k_last, slots)?]
        } else {
            accessible
                .iter()
                .map(|&b| {
                    let single = problem.with_accessibility((0..n_bus).map(|i| i == b.index()).collect());
                    Part::new(&single, &benign, k_last, slots)
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut feasible = true;
        for part in &mut parts {
            feasible &= part.ws.is_feasible()?;
        }
        if !feasible {
            // Later horizons only add rows.
            break;
        }
        'slot: for t in t_lo..=t_hi {
            for g in 0..gens.len() {
                for &kind in problem.goal.kinds() {
                    let (sign, thr) = match kind {
                        RelayKind::Uf => (1.0, uf),
                        RelayKind::Of => (-1.0, of),
                    };
                    let base = response.benign_omega[t][g];
                    // sign * (omega - base) <= sign * (threshold - base)
                    let target = sign * (thr - base);
                    let slot = 2 * g + usize::from(kind == RelayKind::Of);
                    for part in &mut parts {
                        part.set_objective(response, g, t, sign);
                    }
                    if !exhaustive && parts.iter().map(|part| part.bound(slot)).sum::<f64>() > target + 1e-9 {
                        stats.screened += 1;
                        continue;
                    }
                    let mut objective = 0.0;
                    let mut optimal = true;
                    for part in &mut parts {
                        let lp = part.ws.solve(&part.c)?;
                        stats.lp_solves += 1;
                        if lp.status != LpStatus::Optimal {
                            optimal = false;
                            break;
                        }
                        part.last[slot] = Some((part.c.clone(), lp.objective));
                        objective += lp.objective;
                        part.x = lp.x;
                    }
                    if !optimal || objective > target {
                        continue;
                    }
                    if integral {
                        let part = &mut parts[0];
                        let mut m = part.model.clone();
                        let mut obj = LinExpr::new();
                        for (v, &a) in part.c.iter().enumerate() {
                            if a != 0.0 {
                                obj.add_term(VarId(v), a);
                            }
                        }
                        m.add_constraint("trip", obj.clone(), Sense::Le, target);
                        m.set_objective(obj);
                        let sol = solve_milp(&m, problem.options.milp_limits(true))?;
                        stats.milp_solves += 1;
                        stats.milp_nodes += sol.nodes;
                        match sol.status {
                            SolveStatus::Optimal | SolveStatus::TimeLimit if sol.is_feasible() => part.x = sol.values,
                            SolveStatus::TimeLimit => {
                                stats.inconclusive += 1;
                                continue;
                            }
                            _ => continue,
                        }
                    }
                    let mut offsets = vec![vec![0.0; n_bus]; k_last + 1];
                    let mut injections = Vec::new();
                    for part in &parts {
                        for (j, k, v) in part.vars.iter() {
                            let x = part.x[v.0];
                            offsets[k][j] += x;
                            if x != 0.0 {
                                injections.push(Injection {
                                    bus: BusId::from_index(j),
                                    cycle: k,
                                    delta_pu: x,
                                });
                            }
                        }
                    }
                    injections.sort_by_key(|i| (i.cycle, i.bus));
                    let freq = response.predict(&offsets)[t][g];
                    let attack = AttackVector {
                        start_cycle: start,
                        injections,
                        detector_mode: problem.detector.mode(),
                        goal: problem.goal,
                        predicted_trip_timeslot: Some(t),
                    };
                    let event = RelayEvent {
                        bus: gens[g].bus,
                        kind,
                        timeslot: t,
                        frequency: problem.network.omega_to_hz(freq),
                    };
                    if !on_hit(Hit { attack, event }) {
                        return Ok(());
                    }
                    if !exhaustive {
                        continue 'slot;
                    }
                }
            }
        }
    }
    Ok(())
}
