use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenarios/desk3.json");

fn gridfdi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfdi"))
        .args(args)
        .args(["--scenario", SCENARIO, "--out"])
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn attack_then_replay_against_each_detector() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridfdi(&["attack", "--detector", "bdd", "--goal", "uf"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("replay tripped"));
    let attack = dir.path().join("attack.json");
    assert!(attack.exists());

    let a = attack.to_str().unwrap();
    let o = gridfdi(&["replay", "--detector", "bdd", "--attack", a], dir.path());
    assert_eq!(o.status.code(), Some(0));
    // The deviation-rule attack does not survive the anomaly detector.
    let o = gridfdi(&["replay", "--detector", "adm", "--attack", a], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn infeasible_attack_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridfdi(&["attack", "--detector", "adm", "--access", "1", "--horizon", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no feasible attack"));
}

#[test]
fn simulate_writes_case_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridfdi(&["simulate", "--case", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for f in ["case1_loads.csv", "case1_p_g.csv", "case1_p_r.csv", "case1_freq.csv", "README.md"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let o = gridfdi(&["simulate", "--case", "5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_and_train_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridfdi(&["sweep-access", "--k", "1,2", "--detector", "bdd", "--goal", "uf"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("accessibility_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let o = gridfdi(&["train-adm"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("adm.json").exists());
    let o = gridfdi(&["sweep-access", "--k", "9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
