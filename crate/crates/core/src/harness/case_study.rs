//! The four reference runs: benign response, attack under the deviation
//! rule, attack under the ADM, and an attack stopped halfway.

use serde::{Deserialize, Serialize};

use crate::attack::{find_min_trip_time, replay_attack, AttackVector, DetectorMode, Goal};
use crate::dynamics::{equilibrium_state, run_horizon, Trajectory};

use super::report::{ExperimentReport, VerificationRecord};
use super::{HarnessError, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub id: u8,
    pub title: String,
    pub detector: DetectorMode,
    pub goal: Goal,
    pub relay_events: usize,
    pub trip_timeslot: Option<usize>,
    pub predicted_trip_timeslot: Option<usize>,
    pub cycles_to_goal: Option<usize>,
    pub alarms: usize,
    pub validator_alarms: usize,
    /// First and last attacked cycle.
    pub attack_cycles: Option<(usize, usize)>,
    pub final_max_deviation_hz: f64,
}

#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub summary: CaseSummary,
    pub trajectory: Trajectory,
    pub attack: Option<AttackVector>,
}

fn title(id: u8) -> &'static str {
    match id {
        1 => "benign response",
        2 => "attack against the deviation rule",
        3 => "attack against the anomaly detector",
        _ => "attack discontinued mid-window",
    }
}

/// Runs case study `id` (1 to 4). Attacks use the scenario's goal and access.
pub fn run_case_study(prep: &Prepared, id: u8) -> Result<ExperimentReport, HarnessError> {
    if !(1..=4).contains(&id) {
        return Err(HarnessError::Invalid(format!("no case study {id}")));
    }
    let s = &prep.scenario;
    let net = &prep.network;
    let mut report = ExperimentReport::new(s);
    if id == 1 {
        let loads = prep.benign_profile();
        let initial = equilibrium_state(net, &s.sim, loads.at(0))?;
        let trajectory = run_horizon(net, &initial, &s.sim, &loads, &s.policy, None)?;
        report.case_studies.push(CaseStudy {
            summary: CaseSummary {
                id,
                title: title(id).into(),
                detector: DetectorMode::None,
                goal: s.goal,
                relay_events: trajectory.relay_events.len(),
                trip_timeslot: trajectory.first_trip().map(|e| e.timeslot),
                predicted_trip_timeslot: None,
                cycles_to_goal: None,
                alarms: 0,
                validator_alarms: trajectory.valid.iter().filter(|v| !**v).count(),
                attack_cycles: None,
                final_max_deviation_hz: trajectory.final_max_deviation_hz(net),
            },
            trajectory,
            attack: None,
        });
        return Ok(report);
    }

    let mode = if id == 2 { DetectorMode::RulesBdd } else { DetectorMode::MlAdm };
    let problem = prep.problem(mode, s.goal, &prep.access_buses(&s.adversary.access))?;
    let synth = find_min_trip_time(&problem)?;
    let Some(attack) = synth.attack else {
        return Err(HarnessError::Infeasible(format!(
            "case study {id}: no stealthy attack within {} cycles",
            s.adversary.max_duration
        )));
    };
    let first = attack.injections.iter().map(|i| i.cycle).min().unwrap_or(attack.start_cycle);
    let last = attack.last_cycle().unwrap_or(attack.start_cycle);
    let (replayed, cycles) = if id == 4 {
        let end = first + (last - first).div_ceil(2).max(1);
        (attack.truncated(end), (first, end - 1))
    } else {
        (attack.clone(), (first, last))
    };
    let rep = replay_attack(&problem, &replayed, &problem.detector)?;
    if id != 4 {
        let outcome = rep.verify();
        report.verification.push(VerificationRecord::from_outcome(
            format!("case study {id}"),
            &outcome,
        ));
        outcome?;
    }
    report.case_studies.push(CaseStudy {
        summary: CaseSummary {
            id,
            title: title(id).into(),
            detector: mode,
            goal: s.goal,
            relay_events: rep.trajectory.relay_events.len(),
            trip_timeslot: rep.trip_timeslot(),
            predicted_trip_timeslot: replayed.predicted_trip_timeslot.filter(|_| id != 4),
            cycles_to_goal: rep.trip_timeslot().map(|t| t.div_ceil(s.sim.lfc_period)),
            alarms: rep.alarms,
            validator_alarms: rep.validator_alarms,
            attack_cycles: Some(cycles),
            final_max_deviation_hz: rep.trajectory.final_max_deviation_hz(net),
        },
        trajectory: rep.trajectory,
        attack: Some(replayed),
    });
    Ok(report)
}
