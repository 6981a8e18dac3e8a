//! Superposition model of generator frequencies under perceived-load offsets.
//!
//! With the dispatch running every cycle and no validator feedback, the
//! closed loop is affine in the injections and shift-invariant by whole LFC
//! cycles. A single pulse per bus (one unit offset in cycle 0) therefore
//! determines the frequency response to any injection schedule.

use crate::dynamics::{run_horizon_with, InjectionSchedule, StepOperator};
use crate::lfc::LfcEstimator;
use crate::par;

use super::{AttackError, AttackProblem};

#[derive(Debug, Clone)]
pub struct ResponseModel {
    pub lfc_period: usize,
    /// Unattacked frequencies, `[t][generator]`, t = 0..=last timeslot.
    pub benign_omega: Vec<Vec<f64>>,
    /// `[bus][s][generator]`: frequency change s timeslots after a unit
    /// offset was perceived on `bus`.
    pub pulse: Vec<Vec<Vec<f64>>>,
}

impl ResponseModel {
    /// Simulates the benign run and one pulse per bus up to the problem's
    /// last reachable timeslot.
    pub fn new(problem: &AttackProblem) -> Result<Self, AttackError> {
        problem.validate()?;
        let net = &problem.network;
        let mut sim = problem.sim;
        sim.horizon = problem.last_timeslot();
        let op = StepOperator::new(net, &sim)?;
        let est = LfcEstimator::new(net, &sim)?;
        let run = |inj: Option<&InjectionSchedule>| {
            run_horizon_with(net, &op, &est, &problem.initial, &sim, &problem.loads, &problem.policy, inj)
                .map(|tr| tr.states.into_iter().map(|s| s.omega).collect::<Vec<_>>())
        };
        let benign_omega = run(None)?;
        let n = net.n_buses();
        let exec = problem.options.exec;
        let pulses = par::map_range(exec, n, |j| {
            let mut offsets = vec![vec![0.0; n]];
            offsets[0][j] = 1.0;
            run(Some(&InjectionSchedule { offsets })).map(|w| {
                w.iter()
                    .zip(&benign_omega)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                    .collect::<Vec<Vec<f64>>>()
            })
        });
        let pulse = pulses.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            lfc_period: sim.lfc_period,
            benign_omega,
            pulse,
        })
    }

    pub fn last_timeslot(&self) -> usize {
        self.benign_omega.len() - 1
    }

    /// Sensitivity of generator `g`'s frequency at timeslot `t` to the
    /// offset on `bus` in `cycle` (zero unless the offset precedes `t`).
    pub fn coefficient(&self, bus: usize, cycle: usize, g: usize, t: usize) -> f64 {
        let at = cycle * self.lfc_period;
        if t <= at {
            return 0.0;
        }
        self.pulse[bus][t - at][g]
    }

    /// Frequencies predicted for `offsets[cycle][bus]`, `[t][generator]`.
    pub fn predict(&self, offsets: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut w = self.benign_omega.clone();
        for (k, row) in offsets.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (t, wt) in w.iter_mut().enumerate().skip(k * self.lfc_period + 1) {
                    for (g, v) in wt.iter_mut().enumerate() {
                        *v += x * self.pulse[j][t - k * self.lfc_period][g];
                    }
                }
            }
        }
        w
    }
}
