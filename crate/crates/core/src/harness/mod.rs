//! Scenario files, case studies, evaluation experiments and report output.

pub mod case_study;
pub mod experiments;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adm::{AdmConfig, AdmError, AdmModel, BddRule};
use crate::attack::resiliency::ResiliencyOptions;
use crate::attack::{AdversaryModel, AttackError, AttackProblem, Detector, DetectorMode, Goal, SynthesisOptions};
use crate::dynamics::{equilibrium_state, DynamicsError, LoadProfile, SimConfig};
use crate::grid_model::{load_case, BusId, CaseError, NetworkModel};
use crate::ingest::{self, IngestError, SAMPLES_PER_DAY};
use crate::lfc::LfcPolicy;

pub use case_study::{run_case_study, CaseStudy, CaseSummary};
pub use experiments::{
    accessibility_sweep, resiliency_experiment, scalability_bench, LinearFit, ResiliencyRow, ScalabilityRow, SweepRow,
};
pub use report::{emit_plot_data, ExperimentReport, VerificationRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Adm(#[from] AdmError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    /// No stealthy attack reaches the goal where one is required.
    #[error("no feasible attack: {0}")]
    Infeasible(String),
}

/// Which load measurements the adversary controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    All,
    Buses(Vec<BusId>),
    /// The k buses with the largest base load.
    TopLoad(usize),
}

impl Access {
    /// Parses `3` (top-k) or `1,4,7` (bus list).
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("all") {
            return Ok(Access::All);
        }
        if !text.contains(',') {
            if let Ok(k) = text.parse() {
                return Ok(Access::TopLoad(k));
            }
        }
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map(BusId)
                    .map_err(|_| HarnessError::Invalid(format!("bad bus id '{s}' in access list")))
            })
            .collect::<Result<_, _>>()
            .map(Access::Buses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSpec {
    pub mode: DetectorMode,
    pub bdd: BddRule,
    pub adm: AdmConfig,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            mode: DetectorMode::MlAdm,
            bdd: BddRule::default(),
            adm: AdmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarySpec {
    pub access: Access,
    pub attack_start: usize,
    /// Attack window in LFC cycles.
    pub max_duration: usize,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            access: Access::All,
            attack_start: 1,
            max_duration: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLoads {
    /// Daily swing as a fraction of each bus's base load.
    pub daily_amplitude: f64,
    /// Absolute noise, p.u.
    pub noise_sigma: f64,
    pub days: usize,
    /// Per-bus base loads are scaled by a seeded factor in `1 ± level_jitter`.
    pub level_jitter: f64,
}

impl Default for SyntheticLoads {
    fn default() -> Self {
        Self {
            daily_amplitude: 0.1,
            noise_sigma: 0.003,
            days: 7,
            level_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLoads {
    /// Hourly `timestamp,bus_id,load_mw` CSV.
    pub path: PathBuf,
    /// Optional JSON object `{"target bus": source bus}`; round-robin otherwise.
    #[serde(default)]
    pub mapping: Option<PathBuf>,
    #[serde(default = "yes")]
    pub match_base: bool,
    /// Sample held as the benign load during attacks.
    #[serde(default)]
    pub operating_sample: usize,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoadSource {
    Synthetic(SyntheticLoads),
    Dataset(DatasetLoads),
}

impl Default for LoadSource {
    fn default() -> Self {
        LoadSource::Synthetic(SyntheticLoads::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub defenses: Vec<DetectorMode>,
    pub goals: Vec<Goal>,
    pub sweep_k: Vec<usize>,
    /// Timeslot budgets.
    pub resiliency_horizons: Vec<usize>,
    pub resiliency: ResiliencyOptions,
    /// Timeslot budgets.
    pub bench_horizons: Vec<usize>,
    pub bench_repeats: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            defenses: vec![DetectorMode::None, DetectorMode::RulesBdd, DetectorMode::MlAdm],
            goals: vec![Goal::Uf, Goal::Of],
            sweep_k: vec![1, 2, 3],
            resiliency_horizons: vec![600, 900, 1200],
            resiliency: ResiliencyOptions::default(),
            bench_horizons: vec![600, 900, 1200],
            bench_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Case file, relative to the scenario file.
    pub case: PathBuf,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub policy: LfcPolicy,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default = "default_goal")]
    pub goal: Goal,
    #[serde(default)]
    pub loads: LoadSource,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
    #[serde(default)]
    pub experiments: ExperimentSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_goal() -> Goal {
    Goal::Uf
}

/// Command-line adjustments applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub detector: Option<DetectorMode>,
    pub goal: Option<Goal>,
    pub access: Option<Access>,
    /// Attack window in LFC cycles.
    pub horizon: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// Reads a scenario and makes its file references absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut s: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        s.resolve_paths(dir);
        Ok(s)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.case);
        if let LoadSource::Dataset(d) = &mut self.loads {
            fix(&mut d.path);
            if let Some(m) = &mut d.mapping {
                fix(m);
            }
        }
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.detector {
            self.detector.mode = d;
        }
        if let Some(g) = o.goal {
            self.goal = g;
        }
        if let Some(a) = &o.access {
            self.adversary.access = a.clone();
        }
        if let Some(h) = o.horizon {
            self.adversary.max_duration = h;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        let end = (self.adversary.attack_start + self.adversary.max_duration) * self.sim.lfc_period;
        self.sim.horizon = self.sim.horizon.max(end);
    }

    /// FNV-1a over the canonical JSON; identifies the configuration in reports.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// A scenario with its network, load data and trained detector.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub network: NetworkModel,
    /// Per-bus load history used to train the ADM, one sample per LFC cycle.
    pub training: Vec<Vec<f64>>,
    /// Benign loads held during attack runs.
    pub operating: Vec<f64>,
    pub adm: Arc<AdmModel>,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self, HarnessError> {
        scenario.sim.validate()?;
        let mut network = load_case(&scenario.case)?;
        let n = network.n_buses();
        let (training, operating) = match &scenario.loads {
            LoadSource::Synthetic(spec) => {
                if spec.days == 0 {
                    return Err(HarnessError::Invalid("synthetic loads need at least one day".into()));
                }
                if spec.level_jitter > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
                    let scaled: Vec<f64> = network
                        .base_loads()
                        .iter()
                        .map(|b| b * (1.0 + rng.random_range(-spec.level_jitter..=spec.level_jitter)))
                        .collect();
                    network = network.with_base_loads(&scaled);
                }
                let len = SAMPLES_PER_DAY * spec.days;
                let training = network
                    .base_loads()
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| {
                        if b > 0.0 {
                            let seed = scenario.seed.wrapping_mul(7919).wrapping_add(j as u64);
                            ingest::synth_load(b, spec.daily_amplitude * b, spec.noise_sigma, len, seed).values
                        } else {
                            vec![0.0; len]
                        }
                    })
                    .collect();
                // The daily shape crosses its mean at sample 0.
                (training, network.base_loads())
            }
            LoadSource::Dataset(spec) => {
                let raw = ingest::load_hourly_csv(&spec.path, &network)?;
                let mut filled = BTreeMap::new();
                for (bus, s) in raw {
                    filled.insert(bus, ingest::impute_curve_fit(&s)?);
                }
                let sources: Vec<BusId> = filled.keys().copied().collect();
                let mapping = match &spec.mapping {
                    Some(p) => {
                        let m: BTreeMap<String, usize> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                        m.into_iter()
                            .map(|(k, v)| {
                                k.parse()
                                    .map(|t| (BusId(t), BusId(v)))
                                    .map_err(|_| HarnessError::Invalid(format!("bad bus id '{k}' in mapping")))
                            })
                            .collect::<Result<BTreeMap<_, _>, _>>()?
                    }
                    None => ingest::round_robin_mapping(&network, &sources),
                };
                let mapped = ingest::map_series(&network, &filled, &mapping, spec.match_base);
                let table = ingest::table_from_series(&network, &mapped, scenario.sim.lfc_period);
                if table.cycles.is_empty() {
                    return Err(HarnessError::Invalid("dataset has no samples".into()));
                }
                let training: Vec<Vec<f64>> = network.bus_ids().map(|b| table.bus_series(b)).collect();
                let k = spec.operating_sample.min(table.cycles.len() - 1);
                (training, table.cycles[k].clone())
            }
        };
        debug_assert_eq!(training.len(), n);
        let adm = AdmModel::train(&training, scenario.detector.adm, scenario.synthesis.exec)?;
        Ok(Self {
            scenario,
            network,
            training,
            operating,
            adm: Arc::new(adm),
        })
    }

    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self, HarnessError> {
        let mut s = Scenario::load(path)?;
        s.apply(overrides);
        Self::new(s)
    }

    pub fn detector(&self, mode: DetectorMode) -> Detector {
        match mode {
            DetectorMode::None => Detector::None,
            DetectorMode::RulesBdd => Detector::Bdd(self.scenario.detector.bdd),
            DetectorMode::MlAdm => Detector::Adm(self.adm.clone()),
        }
    }

    pub fn access_buses(&self, access: &Access) -> Vec<BusId> {
        match access {
            Access::All => self.network.bus_ids().collect(),
            Access::Buses(b) => b.clone(),
            Access::TopLoad(k) => self.network.buses_by_load().into_iter().take(*k).collect(),
        }
    }

    /// Attack problem at the operating point with the given defense, goal and access.
    pub fn problem(&self, mode: DetectorMode, goal: Goal, access: &[BusId]) -> Result<AttackProblem, HarnessError> {
        let s = &self.scenario;
        let n = self.network.n_buses();
        if let Some(b) = access.iter().find(|b| b.0 == 0 || b.0 > n) {
            return Err(HarnessError::Invalid(format!("access bus {b} not in case")));
        }
        let initial = equilibrium_state(&self.network, &s.sim, &self.operating)?;
        Ok(AttackProblem {
            network: self.network.clone(),
            sim: s.sim,
            initial,
            loads: LoadProfile::Constant(self.operating.clone()),
            policy: s.policy,
            adversary: AdversaryModel::with_access(n, access, s.adversary.attack_start, s.adversary.max_duration),
            detector: self.detector(mode),
            goal,
            options: s.synthesis,
        })
    }

    /// The scenario's own defense, goal and access.
    pub fn default_problem(&self) -> Result<AttackProblem, HarnessError> {
        let s = &self.scenario;
        self.problem(s.detector.mode, s.goal, &self.access_buses(&s.adversary.access))
    }

    /// Time-varying benign loads over the simulation horizon, one training
    /// sample per LFC cycle.
    pub fn benign_profile(&self) -> LoadProfile {
        let p = self.scenario.sim.lfc_period;
        let cycles = self.scenario.sim.horizon / p + 1;
        let len = self.training.first().map_or(0, |s| s.len()).max(1);
        let rows: Vec<Vec<f64>> = (0..cycles)
            .map(|k| self.training.iter().map(|s| s.get(k % len).copied().unwrap_or(0.0)).collect())
            .collect();
        LoadProfile::from_cycles(&rows, p)
    }
}
