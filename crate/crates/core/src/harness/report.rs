//! Report assembly and plot-ready output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attack::AttackError;
use crate::grid_model::NetworkModel;

use super::case_study::{CaseStudy, CaseSummary};
use super::experiments::{LinearFit, ResiliencyRow, ScalabilityRow, SweepRow};
use super::{HarnessError, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub what: String,
    pub ok: bool,
    pub detail: String,
}

impl VerificationRecord {
    pub fn from_outcome(what: String, outcome: &Result<(), AttackError>) -> Self {
        Self {
            what,
            ok: outcome.is_ok(),
            detail: outcome.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenario: String,
    pub digest: String,
    pub seed: u64,
    pub case_studies: Vec<CaseStudy>,
    pub sweep: Vec<SweepRow>,
    pub resiliency: Vec<ResiliencyRow>,
    pub scalability: Vec<ScalabilityRow>,
    pub fits: Vec<LinearFit>,
    pub verification: Vec<VerificationRecord>,
}

impl ExperimentReport {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            scenario: scenario.name.clone(),
            digest: scenario.digest(),
            seed: scenario.seed,
            case_studies: Vec::new(),
            sweep: Vec::new(),
            resiliency: Vec::new(),
            scalability: Vec::new(),
            fits: Vec::new(),
            verification: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: ExperimentReport) {
        self.case_studies.extend(other.case_studies);
        self.sweep.extend(other.sweep);
        self.resiliency.extend(other.resiliency);
        self.scalability.extend(other.scalability);
        self.fits.extend(other.fits);
        self.verification.extend(other.verification);
    }

    pub fn summaries(&self) -> Vec<&CaseSummary> {
        self.case_studies.iter().map(|c| &c.summary).collect()
    }
}

const SCHEMA: &str = "# Output files

All power values are per unit on the case base MVA; frequencies are in Hz.
Bus ids are 1-based. Files are rewritten in full on every run.

- `case<N>_loads.csv`: timeslot, bus, true_pu, perceived_pu. Perceived is
  what the LFC saw in the cycle covering the timeslot.
- `case<N>_p_g.csv`: timeslot, bus, p_g_pu (generator buses only).
- `case<N>_p_r.csv`: cycle, bus, p_r_pu (dispatched setpoints).
- `case<N>_freq.csv`: timeslot, bus, freq_hz (generator buses only).
- `case<N>_attack.json`: attack vector replayed in case study N, if any.
- `case_studies.json`: per case study trip timeslot, cycles, alarms and
  final frequency deviation.
- `accessibility_sweep.csv`: defense, goal, k, access, timeslots, cycles,
  replay_timeslot. Empty timeslots mark an infeasible cell.
- `resiliency.csv`: defense, goal, horizon, k, bound, subsets_tested.
  k is N/A when no tested cardinality reaches the goal.
- `scalability.csv`: defense, goal, timeslots, model_rows, lp_solves, wall_s.
  wall_s is the only column that differs between identical runs.
- `scalability_fit.csv`: defense, goal, slope, intercept, r2 of wall_s
  against timeslots.
- `verification.csv`: what, ok, detail for every replay check.
- `report.json`: scenario name, digest and seed.
";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    Ok(csv::Writer::from_path(path)?)
}

fn write_case(dir: &Path, network: &NetworkModel, case: &CaseStudy, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let id = case.summary.id;
    let traj = &case.trajectory;
    let p = traj.lfc_period;
    let gens: Vec<_> = network.generators().iter().map(|g| g.bus).collect();

    let path = dir.join(format!("case{id}_loads.csv"));
    let mut w = writer(&path)?;
    w.write_record(["timeslot", "bus", "true_pu", "perceived_pu"])?;
    for s in &traj.states {
        let k = (s.t / p).min(traj.perceptions.len().saturating_sub(1));
        for bus in network.bus_ids() {
            let perceived = traj.perceptions.get(k).map(|c| c.perceived_loads[bus.index()]);
            w.write_record([s.t.to_string(), bus.to_string(), s.load[bus.index()].to_string(), opt(perceived)])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = dir.join(format!("case{id}_p_g.csv"));
    let mut w = writer(&path)?;
    w.write_record(["timeslot", "bus", "p_g_pu"])?;
    for s in &traj.states {
        for (g, bus) in gens.iter().enumerate() {
            w.write_record([s.t.to_string(), bus.to_string(), s.gen_power[g].to_string()])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = dir.join(format!("case{id}_p_r.csv"));
    let mut w = writer(&path)?;
    w.write_record(["cycle", "bus", "p_r_pu"])?;
    for (k, d) in traj.dispatch.iter().enumerate() {
        for (g, bus) in gens.iter().enumerate() {
            w.write_record([k.to_string(), bus.to_string(), d[g].to_string()])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = dir.join(format!("case{id}_freq.csv"));
    let mut w = writer(&path)?;
    w.write_record(["timeslot", "bus", "freq_hz"])?;
    for s in &traj.states {
        for (g, bus) in gens.iter().enumerate() {
            w.write_record([s.t.to_string(), bus.to_string(), network.omega_to_hz(s.omega[g]).to_string()])?;
        }
    }
    w.flush()?;
    files.push(path);

    if let Some(a) = &case.attack {
        let path = dir.join(format!("case{id}_attack.json"));
        a.save(&path)?;
        files.push(path);
    }
    Ok(())
}

/// Writes every table of `report` (headers only when empty), per-case
/// trajectory CSVs and a README describing the columns. Returns the files
/// written, in a fixed order.
pub fn emit_plot_data(report: &ExperimentReport, network: &NetworkModel, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut cases: Vec<&CaseStudy> = report.case_studies.iter().collect();
    cases.sort_by_key(|c| c.summary.id);
    for case in &cases {
        write_case(dir, network, case, &mut files)?;
    }
    let path = dir.join("case_studies.json");
    let summaries: Vec<&CaseSummary> = cases.iter().map(|c| &c.summary).collect();
    fs::write(&path, serde_json::to_string_pretty(&summaries)? + "\n")?;
    files.push(path);

    let path = dir.join("accessibility_sweep.csv");
    let mut w = writer(&path)?;
    w.write_record(["defense", "goal", "k", "access", "timeslots", "cycles", "replay_timeslot"])?;
    for r in &report.sweep {
        let access: Vec<String> = r.access.iter().map(|b| b.to_string()).collect();
        w.write_record([
            r.defense.label().to_string(),
            r.goal.label().to_string(),
            r.k.to_string(),
            access.join(" "),
            opt(r.timeslots),
            opt(r.cycles),
            opt(r.replay_timeslot),
        ])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("resiliency.csv");
    let mut w = writer(&path)?;
    w.write_record(["defense", "goal", "horizon", "k", "bound", "subsets_tested"])?;
    for r in &report.resiliency {
        let bound = match r.bound {
            crate::attack::BoundKind::Exact => "exact",
            crate::attack::BoundKind::Sampled => "sampled",
        };
        w.write_record([
            r.defense.label().to_string(),
            r.goal.label().to_string(),
            r.horizon.to_string(),
            r.label(),
            bound.to_string(),
            r.subsets_tested.to_string(),
        ])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("scalability.csv");
    let mut w = writer(&path)?;
    w.write_record(["defense", "goal", "timeslots", "model_rows", "lp_solves", "wall_s"])?;
    for r in &report.scalability {
        w.write_record([
            r.defense.label().to_string(),
            r.goal.label().to_string(),
            r.timeslots.to_string(),
            r.model_rows.to_string(),
            r.lp_solves.to_string(),
            format!("{:.6}", r.wall_s),
        ])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("scalability_fit.csv");
    let mut w = writer(&path)?;
    w.write_record(["defense", "goal", "slope", "intercept", "r2"])?;
    for f in &report.fits {
        w.write_record([
            f.defense.label().to_string(),
            f.goal.label().to_string(),
            format!("{:e}", f.slope),
            format!("{:e}", f.intercept),
            format!("{:.6}", f.r2),
        ])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("verification.csv");
    let mut w = writer(&path)?;
    w.write_record(["what", "ok", "detail"])?;
    for v in &report.verification {
        w.write_record([v.what.clone(), v.ok.to_string(), v.detail.clone()])?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("report.json");
    let meta = serde_json::json!({
        "scenario": report.scenario,
        "digest": report.digest,
        "seed": report.seed,
    });
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    files.push(path);

    let path = dir.join("README.md");
    fs::write(&path, SCHEMA)?;
    files.push(path);
    Ok(files)
}
