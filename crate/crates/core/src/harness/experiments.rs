//! Accessibility sweep, k-resiliency table and scalability bench.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::resiliency::{k_resiliency, BoundKind};
use crate::attack::synth::stealth_model_rows;
use crate::attack::{find_min_trip_time_with, replay_attack, trip_feasibility_map, DetectorMode, Goal, ResponseModel};
use crate::grid_model::BusId;
use crate::par;

use super::report::{ExperimentReport, VerificationRecord};
use super::{Access, HarnessError, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub defense: DetectorMode,
    pub goal: Goal,
    pub k: usize,
    pub access: Vec<BusId>,
    /// Minimal trip timeslot; `None` for an infeasible cell.
    pub timeslots: Option<usize>,
    pub cycles: Option<usize>,
    pub replay_timeslot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiliencyRow {
    pub defense: DetectorMode,
    pub goal: Goal,
    /// Timeslots the attack may span.
    pub horizon: usize,
    pub k: Option<usize>,
    pub bound: BoundKind,
    pub subsets_tested: usize,
}

impl ResiliencyRow {
    pub fn label(&self) -> String {
        self.k.map_or_else(|| "N/A".to_string(), |k| k.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityRow {
    pub defense: DetectorMode,
    pub goal: Goal,
    pub timeslots: usize,
    /// Detector rows in the stealth model spanning the whole window.
    pub model_rows: usize,
    pub lp_solves: usize,
    /// Median wall time over the repeats.
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub defense: DetectorMode,
    pub goal: Goal,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)` and its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { slope * sxy / syy } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Minimal trip time for each (defense, goal, k) with the k highest-load
/// buses accessible. Every feasible cell is replayed; a replay that misses
/// the prediction or raises an alarm fails the sweep.
pub fn accessibility_sweep(
    prep: &Prepared,
    k_values: &[usize],
    defenses: &[DetectorMode],
    goals: &[Goal],
) -> Result<ExperimentReport, HarnessError> {
    let n_load = prep.network.buses_by_load().len();
    if let Some(k) = k_values.iter().find(|&&k| k > n_load) {
        return Err(HarnessError::Invalid(format!(
            "k = {k} exceeds the {n_load} buses with load"
        )));
    }
    let all = prep.access_buses(&Access::All);
    let response = ResponseModel::new(&prep.problem(DetectorMode::None, Goal::Either, &all)?)?;
    let mut cells = Vec::new();
    for &d in defenses {
        for &g in goals {
            for &k in k_values {
                cells.push((d, g, k));
            }
        }
    }
    cells.sort();
    let results = par::map(prep.scenario.synthesis.exec, &cells, |&(d, g, k)| {
        let access = prep.access_buses(&Access::TopLoad(k));
        let problem = prep.problem(d, g, &access)?;
        let r = find_min_trip_time_with(&problem, &response)?;
        let (replay_timeslot, outcome) = match &r.attack {
            Some(a) => {
                let rep = replay_attack(&problem, a, &problem.detector)?;
                (rep.trip_timeslot(), Some(rep.verify()))
            }
            None => (None, None),
        };
        let row = SweepRow {
            defense: d,
            goal: g,
            k,
            access,
            timeslots: r.trip_timeslot,
            cycles: r.lfc_cycles_to_goal,
            replay_timeslot,
        };
        Ok::<_, HarnessError>((row, outcome))
    });
    let mut report = ExperimentReport::new(&prep.scenario);
    for res in results {
        let (row, outcome) = res?;
        if let Some(outcome) = outcome {
            let what = format!("sweep {} {} k={}", row.defense.label(), row.goal.label(), row.k);
            report.verification.push(VerificationRecord::from_outcome(what, &outcome));
            outcome?;
        }
        report.sweep.push(row);
    }
    Ok(report)
}

/// k-resiliency per (defense, goal, horizon); candidates are the buses with load.
pub fn resiliency_experiment(
    prep: &Prepared,
    horizons: &[usize],
    defenses: &[DetectorMode],
    goals: &[Goal],
) -> Result<ExperimentReport, HarnessError> {
    let p = prep.scenario.sim.lfc_period;
    let candidates = prep.network.buses_by_load();
    let mut report = ExperimentReport::new(&prep.scenario);
    let mut cells = Vec::new();
    for &d in defenses {
        for &g in goals {
            for &h in horizons {
                cells.push((d, g, h));
            }
        }
    }
    cells.sort();
    for (d, g, h) in cells {
        let cycles = h / p;
        if cycles == 0 {
            return Err(HarnessError::Invalid(format!("horizon {h} is shorter than one LFC cycle")));
        }
        let mut problem = prep.problem(d, g, &candidates)?;
        problem.adversary.max_duration = cycles;
        problem.sim.horizon = problem.sim.horizon.max(problem.last_timeslot());
        let mut options = prep.scenario.experiments.resiliency;
        options.seed = prep.scenario.seed;
        let r = k_resiliency(&problem, &candidates, options)?;
        report.resiliency.push(ResiliencyRow {
            defense: d,
            goal: g,
            horizon: h,
            k: r.k,
            bound: r.bound,
            subsets_tested: r.subsets_tested,
        });
    }
    Ok(report)
}

/// Wall time of the exhaustive trip-feasibility scan over windows of
/// `horizons` timeslots, median of `repeats` runs, with a linear fit per
/// (defense, goal).
pub fn scalability_bench(
    prep: &Prepared,
    horizons: &[usize],
    defenses: &[DetectorMode],
    goals: &[Goal],
    repeats: usize,
) -> Result<ExperimentReport, HarnessError> {
    let p = prep.scenario.sim.lfc_period;
    let access = prep.access_buses(&prep.scenario.adversary.access);
    let mut report = ExperimentReport::new(&prep.scenario);
    for &d in defenses {
        for &g in goals {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &h in horizons {
                let cycles = h / p;
                if cycles == 0 {
                    return Err(HarnessError::Invalid(format!("horizon {h} is shorter than one LFC cycle")));
                }
                let mut problem = prep.problem(d, g, &access)?;
                problem.adversary.max_duration = cycles;
                problem.sim.horizon = problem.sim.horizon.max(problem.last_timeslot());
                let mut times = Vec::new();
                let mut lp_solves = 0;
                for _ in 0..repeats.max(1) {
                    let clock = Instant::now();
                    let (_, stats) = trip_feasibility_map(&problem)?;
                    times.push(clock.elapsed().as_secs_f64());
                    lp_solves = stats.lp_solves;
                }
                times.sort_by(f64::total_cmp);
                let wall_s = times[times.len() / 2];
                xs.push(h as f64);
                ys.push(wall_s);
                report.scalability.push(ScalabilityRow {
                    defense: d,
                    goal: g,
                    timeslots: h,
                    model_rows: stealth_model_rows(&problem)?,
                    lp_solves,
                    wall_s,
                });
            }
            if xs.len() >= 2 {
                let (slope, intercept, r2) = linear_fit(&xs, &ys);
                report.fits.push(LinearFit {
                    defense: d,
                    goal: g,
                    slope,
                    intercept,
                    r2,
                });
            }
        }
    }
    Ok(report)
}
