//! Re-simulates a synthesized attack and checks it against its prediction.

use std::collections::BTreeSet;

use crate::dynamics::{run_horizon, RelayEvent, Trajectory};
use crate::grid_model::BusId;

use super::{AttackError, AttackProblem, AttackVector, Detector};

/// Allowed gap between predicted and replayed trip timeslot.
pub const TRIP_TOLERANCE: usize = 2;

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub trajectory: Trajectory,
    pub tripped: bool,
    pub trip_event: Option<RelayEvent>,
    pub predicted_trip: Option<usize>,
    /// Detector alarms raised on attacked windows before the trip.
    pub alarms: usize,
    /// `(bus, cycle)` of each alarm.
    pub alarm_cycles: Vec<(BusId, usize)>,
    /// Cycles the LFC's own measurement validator rejected before the trip.
    pub validator_alarms: usize,
}

impl ReplayReport {
    pub fn trip_timeslot(&self) -> Option<usize> {
        self.trip_event.map(|e| e.timeslot)
    }

    /// Fails unless the relay tripped within tolerance of the prediction
    /// with no detector alarm.
    pub fn verify(&self) -> Result<(), AttackError> {
        let Some(actual) = self.trip_timeslot() else {
            return Err(AttackError::VerificationMismatch(format!(
                "no relay tripped (predicted {:?})",
                self.predicted_trip
            )));
        };
        if let Some(pred) = self.predicted_trip {
            if pred.abs_diff(actual) > TRIP_TOLERANCE {
                return Err(AttackError::VerificationMismatch(format!(
                    "predicted trip at {pred}, replay tripped at {actual}"
                )));
            }
        }
        if self.alarms > 0 {
            return Err(AttackError::VerificationMismatch(format!(
                "{} detector alarms before the trip at {:?}",
                self.alarms, self.alarm_cycles
            )));
        }
        Ok(())
    }
}

/// Runs the closed loop over the problem's full horizon with `attack`
/// applied to the perceived loads, and checks `detector` on every window
/// that contains an injected value, up to the first relay trip.
pub fn replay_attack(
    problem: &AttackProblem,
    attack: &AttackVector,
    detector: &Detector,
) -> Result<ReplayReport, AttackError> {
    let net = &problem.network;
    let schedule = attack.schedule(net.n_buses());
    let trajectory = run_horizon(net, &problem.initial, &problem.sim, &problem.loads, &problem.policy, Some(&schedule))?;
    let trip_event = trajectory.first_trip().copied();
    let p = problem.sim.lfc_period;
    let before_trip = |k: usize| trip_event.is_none_or(|e| k * p < e.timeslot);
    let touched: BTreeSet<(usize, usize)> = attack
        .injections
        .iter()
        .filter(|i| i.delta_pu != 0.0)
        .map(|i| (i.bus.index(), i.cycle))
        .collect();
    let perceived = |k: usize, j: usize| trajectory.perceptions[k].perceived_loads[j];
    let l = detector.lookback();
    let mut alarm_cycles = Vec::new();
    for k in l..trajectory.perceptions.len() {
        if !before_trip(k) {
            break;
        }
        for j in 0..net.n_buses() {
            if !(k - l..=k).any(|c| touched.contains(&(j, c))) {
                continue;
            }
            let flagged = match detector {
                Detector::None => false,
                Detector::Bdd(rule) => !rule.check(perceived(k - 1, j), perceived(k, j)),
                Detector::Adm(m) => {
                    let w: Vec<f64> = (k - l..=k).map(|c| perceived(c, j)).collect();
                    !m.is_benign(BusId::from_index(j), &w)
                }
            };
            if flagged {
                alarm_cycles.push((BusId::from_index(j), k));
            }
        }
    }
    let validator_alarms = trajectory
        .valid
        .iter()
        .enumerate()
        .filter(|&(k, ok)| !ok && before_trip(k))
        .count();
    Ok(ReplayReport {
        tripped: trip_event.is_some(),
        trip_event,
        predicted_trip: attack.predicted_trip_timeslot,
        alarms: alarm_cycles.len(),
        alarm_cycles,
        validator_alarms,
        trajectory,
    })
}
