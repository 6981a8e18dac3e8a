use std::fs;
use std::path::Path;

use gridfdi_core::attack::{DetectorMode, Goal};
use gridfdi_core::grid_model::BusId;
use gridfdi_core::harness::{
    accessibility_sweep, emit_plot_data, run_case_study, Access, ExperimentReport, Overrides, Prepared, Scenario,
};
use gridfdi_core::harness::experiments::linear_fit;

const DESK3: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/desk3.json");

fn read_all(files: &[std::path::PathBuf]) -> Vec<(String, String)> {
    files
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(p).unwrap()))
        .collect()
}

#[test]
fn access_strings() {
    assert_eq!(Access::parse("all").unwrap(), Access::All);
    assert_eq!(Access::parse(" 3 ").unwrap(), Access::TopLoad(3));
    assert_eq!(Access::parse("1,4, 7").unwrap(), Access::Buses(vec![BusId(1), BusId(4), BusId(7)]));
    assert!(Access::parse("1,x").is_err());
}

#[test]
fn overrides_reach_the_problem() {
    let mut s = Scenario::load(DESK3).unwrap();
    let digest = s.digest();
    assert!(Path::new(&s.case).is_absolute());
    s.apply(&Overrides {
        seed: Some(3),
        detector: Some(DetectorMode::RulesBdd),
        goal: Some(Goal::Of),
        access: Some(Access::Buses(vec![BusId(2)])),
        horizon: Some(60),
        out: None,
    });
    assert_ne!(s.digest(), digest);
    assert!(s.sim.horizon >= 61 * 60);
    let prep = Prepared::new(s).unwrap();
    let p = prep.default_problem().unwrap();
    assert_eq!(p.detector.mode(), DetectorMode::RulesBdd);
    assert_eq!(p.goal, Goal::Of);
    assert_eq!(p.adversary.accessible(), vec![BusId(2)]);
    assert_eq!(p.adversary.max_duration, 60);
    assert!(prep.problem(DetectorMode::None, Goal::Uf, &[BusId(9)]).is_err());
}

#[test]
fn identical_runs_write_identical_files() {
    let prep = Prepared::load(DESK3, &Overrides::default()).unwrap();
    let run = || {
        let mut r = run_case_study(&prep, 2).unwrap();
        r.merge(accessibility_sweep(&prep, &[1, 3], &[DetectorMode::None, DetectorMode::RulesBdd], &[Goal::Uf]).unwrap());
        r
    };
    let (a, b) = (run(), run());
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = read_all(&emit_plot_data(&a, &prep.network, da.path()).unwrap());
    let fb = read_all(&emit_plot_data(&b, &prep.network, db.path()).unwrap());
    assert_eq!(fa, fb);
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["case2_loads.csv", "case2_p_g.csv", "case2_p_r.csv", "case2_freq.csv", "case2_attack.json", "accessibility_sweep.csv"] {
        assert!(names.contains(&want), "{want} missing");
    }
    assert!(a.verification.iter().all(|v| v.ok));
    let sweep = &fa.iter().find(|(n, _)| n == "accessibility_sweep.csv").unwrap().1;
    assert_eq!(sweep.lines().count(), 5);
}

#[test]
fn empty_report_writes_headers_only() {
    let s = Scenario::load(DESK3).unwrap();
    let prep = Prepared::new(s.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&ExperimentReport::new(&s), &prep.network, dir.path()).unwrap();
    for (name, text) in read_all(&files) {
        if name.ends_with(".csv") {
            assert_eq!(text.lines().count(), 1, "{name}");
        }
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(meta["digest"], s.digest());
}

#[test]
fn benign_case_study_stays_quiet() {
    let prep = Prepared::load(DESK3, &Overrides::default()).unwrap();
    let r = run_case_study(&prep, 1).unwrap();
    let c = &r.case_studies[0];
    assert_eq!(c.summary.relay_events, 0);
    assert!(c.attack.is_none());
    assert!(c.summary.final_max_deviation_hz < 0.05);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&r, &prep.network, dir.path()).unwrap();
    let cases: Vec<_> = files.iter().filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("case1_")).collect();
    assert_eq!(cases.len(), 4);
    let freq = fs::read_to_string(dir.path().join("case1_freq.csv")).unwrap();
    // One row per generator per timeslot plus the header.
    assert_eq!(freq.lines().count(), 1 + 2 * (prep.scenario.sim.horizon + 1));
}

#[test]
fn sweep_rejects_k_beyond_loaded_buses() {
    let prep = Prepared::load(DESK3, &Overrides::default()).unwrap();
    assert!(accessibility_sweep(&prep, &[4], &[DetectorMode::None], &[Goal::Uf]).is_err());
}

#[test]
fn linear_fit_recovers_a_line() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let (m, c, r2) = linear_fit(&x, &x.map(|v| 2.0 * v - 1.0));
    assert!((m - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    let (_, _, r2) = linear_fit(&x, &[1.0, 3.0, 1.0, 3.0]);
    assert!(r2 < 0.5);
}
