mod common;

use std::time::Instant;

use gridfdi_core::dynamics::{equilibrium_state, run_horizon, LoadProfile, SimConfig, StepOperator};
use gridfdi_core::grid_model::{laplacian, load_case, BusId, NetworkModel};
use gridfdi_core::lfc::LfcPolicy;

use common::explicit_reference;

fn desk3() -> NetworkModel {
    load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/cases/desk3.json")).unwrap()
}

#[test]
fn backward_euler_tracks_fine_explicit_reference() {
    let net = desk3();
    let sim = SimConfig::default();
    let s0 = equilibrium_state(&net, &sim, &net.base_loads()).unwrap();
    let op = StepOperator::new(&net, &sim).unwrap();
    for bus in net.bus_ids() {
        for step in [0.1, -0.1, 0.3] {
            let mut loads = s0.load.clone();
            loads[bus.index()] += step;
            let per_second = (1.0 / sim.dt).round() as usize;
            let reference = explicit_reference(&net, &s0, &s0.reference, &loads, sim.dt / 100.0, per_second * 100, 100);
            let mut s = s0.clone();
            let mut worst = 0.0f64;
            for want in &reference {
                s = op.step(&s, &s0.reference, &loads).unwrap();
                for (a, b) in s.omega.iter().zip(want) {
                    worst = worst.max((a - b).abs());
                }
            }
            assert!(worst <= 5e-4, "bus {bus} step {step}: {worst:e}");
            // The step is big enough to be visible.
            assert!((s.omega[0] - net.nominal_omega).abs() > 10.0 * worst);
        }
    }
}

#[test]
fn states_satisfy_dc_power_flow() {
    let net = desk3();
    let sim = SimConfig {
        horizon: 300,
        ..Default::default()
    };
    let s0 = equilibrium_state(&net, &sim, &net.base_loads()).unwrap();
    let mut loads = s0.load.clone();
    loads[2] += 0.2;
    let traj = run_horizon(&net, &s0, &sim, &LoadProfile::Constant(loads), &LfcPolicy::default(), None).unwrap();
    let l = laplacian(&net);
    for s in &traj.states {
        assert_eq!(s.angle[net.slack().index()], 0.0);
        for i in 0..net.n_buses() {
            let flow: f64 = (0..net.n_buses()).map(|j| l[(i, j)] * s.angle[j]).sum();
            let pg = net.generator_at(BusId::from_index(i)).map_or(0.0, |g| s.gen_power[g]);
            assert!((pg - s.load[i] - flow).abs() < 1e-9, "t {} bus {}", s.t, i + 1);
        }
    }
}

#[test]
fn benign_run_settles_to_nominal_quickly() {
    let net = desk3();
    let sim = SimConfig::default();
    assert_eq!(sim.horizon, 3000);
    // Start balanced for lighter loads so the controller has work to do.
    let light: Vec<f64> = net.base_loads().iter().map(|l| 0.9 * l).collect();
    let s0 = equilibrium_state(&net, &sim, &light).unwrap();
    let clock = Instant::now();
    let traj = run_horizon(&net, &s0, &sim, &LoadProfile::Constant(net.base_loads()), &LfcPolicy::default(), None).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    assert_eq!(traj.states.len(), 3001);
    assert!(traj.relay_events.is_empty());
    let dev = traj.final_max_deviation_hz(&net);
    assert!(dev <= 0.01, "{dev} Hz");
    let early = traj.states[30].omega.iter().map(|w| net.omega_to_hz((w - net.nominal_omega).abs())).fold(0.0, f64::max);
    assert!(early > 0.01);
    assert!(elapsed < 5.0, "{elapsed} s");
}

#[test]
fn frozen_setpoints_leave_a_droop_offset() {
    let net = desk3();
    let sim = SimConfig {
        horizon: 2400,
        ..Default::default()
    };
    let s0 = equilibrium_state(&net, &sim, &net.base_loads()).unwrap();
    let mut loads = s0.load.clone();
    loads[2] += 0.1;
    let profile = LoadProfile::Constant(loads);
    let frozen = run_horizon(&net, &s0, &sim, &profile, &LfcPolicy::frozen(), None).unwrap();
    let active = run_horizon(&net, &s0, &sim, &profile, &LfcPolicy::default(), None).unwrap();
    // Primary response alone settles where the governors absorb the step:
    // sum_g (-d_omega / R_g) = step, ignoring damping.
    let inv_r: f64 = net.generators().iter().map(|g| 1.0 / g.params.droop).sum();
    let kd: f64 = net.generators().iter().map(|g| g.params.damping).sum();
    let expected = -0.1 / (inv_r + kd);
    let got = frozen.final_state().omega[0] - net.nominal_omega;
    assert!((got - expected).abs() < 1e-4, "{got} vs {expected}");
    assert!(frozen.dispatch.iter().all(|d| *d == s0.reference));
    assert!(active.final_max_deviation_hz(&net) < 0.01);
}

#[test]
fn perceived_injection_moves_the_real_frequency() {
    let net = desk3();
    let sim = SimConfig {
        horizon: 600,
        ..Default::default()
    };
    let s0 = equilibrium_state(&net, &sim, &net.base_loads()).unwrap();
    let profile = LoadProfile::Constant(s0.load.clone());
    let mut offsets = vec![vec![0.0; 3]; 10];
    for o in offsets.iter_mut().skip(1) {
        o[2] = -0.1;
    }
    let inj = gridfdi_core::dynamics::InjectionSchedule { offsets };
    let traj = run_horizon(&net, &s0, &sim, &profile, &LfcPolicy::default(), Some(&inj)).unwrap();
    // Under-reported load makes the LFC under-dispatch, so frequency sags.
    assert!(traj.final_state().omega.iter().all(|w| *w < net.nominal_omega - 1e-4));
    let clean = run_horizon(&net, &s0, &sim, &profile, &LfcPolicy::default(), None).unwrap();
    assert!(clean.final_max_deviation_hz(&net) < 1e-9);
}
