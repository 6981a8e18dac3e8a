use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridfdi_core::attack::{find_min_trip_time, replay_attack, AttackError, AttackVector, DetectorMode, Goal};
use gridfdi_core::harness::{
    accessibility_sweep, emit_plot_data, resiliency_experiment, run_case_study, scalability_bench, Access,
    ExperimentReport, HarnessError, Overrides, Prepared,
};

#[derive(Parser)]
#[command(name = "gridfdi", version, about = "Stealthy load-measurement attacks on load frequency control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case study (1 benign, 2 deviation rule, 3 anomaly detector, 4 stopped attack).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
    },
    /// Train the anomaly detector and write it to <out>/adm.json.
    TrainAdm(Common),
    /// Synthesize the fastest stealthy attack and verify it by replay.
    Attack(Common),
    /// Replay an attack file against the scenario's detector.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attack: PathBuf,
    },
    /// Minimal trip time for the k highest-load buses, per defense and goal.
    SweepAccess {
        #[command(flatten)]
        common: Common,
        /// Comma-separated k values; defaults to the scenario's list.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// k-resiliency per defense, goal and timeslot budget.
    Resiliency(Common),
    /// Wall time of the exhaustive feasibility scan against horizon.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to the scenario's.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    #[arg(long, value_enum)]
    goal: Option<GoalArg>,
    /// `k` for the k highest-load buses, a bus list like `1,4,7`, or `all`.
    #[arg(long)]
    access: Option<String>,
    /// Attack window in LFC cycles.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    None,
    Bdd,
    Adm,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoalArg {
    Uf,
    Of,
    Either,
}

impl From<DetectorArg> for DetectorMode {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::None => DetectorMode::None,
            DetectorArg::Bdd => DetectorMode::RulesBdd,
            DetectorArg::Adm => DetectorMode::MlAdm,
        }
    }
}

impl From<GoalArg> for Goal {
    fn from(g: GoalArg) -> Self {
        match g {
            GoalArg::Uf => Goal::Uf,
            GoalArg::Of => Goal::Of,
            GoalArg::Either => Goal::Either,
        }
    }
}

impl Common {
    fn prepare(&self) -> Result<Prepared, HarnessError> {
        let overrides = Overrides {
            seed: self.seed,
            detector: self.detector.map(Into::into),
            goal: self.goal.map(Into::into),
            access: self.access.as_deref().map(Access::parse).transpose()?,
            horizon: self.horizon,
            out: self.out.clone(),
        };
        Prepared::load(&self.scenario, &overrides)
    }

    /// Defenses and goals for the table verbs: the explicit flag if given,
    /// else the scenario's lists.
    fn grid(&self, prep: &Prepared) -> (Vec<DetectorMode>, Vec<Goal>) {
        let e = &prep.scenario.experiments;
        let defenses = self.detector.map_or_else(|| e.defenses.clone(), |d| vec![d.into()]);
        let goals = self.goal.map_or_else(|| e.goals.clone(), |g| vec![g.into()]);
        (defenses, goals)
    }
}

fn out_dir(prep: &Prepared) -> PathBuf {
    prep.scenario.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&prep.scenario.name))
}

fn emit(prep: &Prepared, report: &ExperimentReport) -> Result<(), HarnessError> {
    let dir = out_dir(prep);
    let files = emit_plot_data(report, &prep.network, &dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn show(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { common, case } => {
            let prep = common.prepare()?;
            let report = run_case_study(&prep, case)?;
            for s in report.summaries() {
                println!(
                    "case {} ({}): trip {} predicted {} cycles {} alarms {} validator alarms {} final deviation {:.4} Hz",
                    s.id,
                    s.title,
                    show(s.trip_timeslot),
                    show(s.predicted_trip_timeslot),
                    show(s.cycles_to_goal),
                    s.alarms,
                    s.validator_alarms,
                    s.final_max_deviation_hz
                );
            }
            emit(&prep, &report)
        }
        Command::TrainAdm(common) => {
            let prep = common.prepare()?;
            for (bus, hulls) in &prep.adm.per_bus {
                let verts: Vec<usize> = hulls.iter().map(|h| h.vertices.len()).collect();
                println!("bus {bus}: {} hulls, vertices {verts:?}", hulls.len());
            }
            let dir = out_dir(&prep);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("adm.json");
            prep.adm.save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Attack(common) => {
            let prep = common.prepare()?;
            let problem = prep.default_problem()?;
            let r = find_min_trip_time(&problem)?;
            let Some(attack) = r.attack else {
                return Err(HarnessError::Infeasible(format!(
                    "{} / {}: no stealthy attack within {} cycles",
                    problem.detector.mode().label(),
                    problem.goal.label(),
                    problem.adversary.max_duration
                )));
            };
            println!(
                "trip at timeslot {} ({} LFC cycles), {} injections, {} LP solves",
                show(r.trip_timeslot),
                show(r.lfc_cycles_to_goal),
                attack.injections.len(),
                r.stats.lp_solves
            );
            let dir = out_dir(&prep);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("attack.json");
            attack.save(&path)?;
            println!("wrote {}", path.display());
            let rep = replay_attack(&problem, &attack, &problem.detector)?;
            rep.verify()?;
            println!("replay tripped at {} with no alarms", show(rep.trip_timeslot()));
            Ok(())
        }
        Command::Replay { common, attack } => {
            let prep = common.prepare()?;
            let vector = AttackVector::load(&attack)?;
            let problem = prep.default_problem()?;
            let rep = replay_attack(&problem, &vector, &problem.detector)?;
            println!(
                "trip {} predicted {} alarms {} validator alarms {}",
                show(rep.trip_timeslot()),
                show(rep.predicted_trip),
                rep.alarms,
                rep.validator_alarms
            );
            rep.verify()?;
            Ok(())
        }
        Command::SweepAccess { common, k } => {
            let prep = common.prepare()?;
            let (defenses, goals) = common.grid(&prep);
            let k = if k.is_empty() { prep.scenario.experiments.sweep_k.clone() } else { k };
            let report = accessibility_sweep(&prep, &k, &defenses, &goals)?;
            for r in &report.sweep {
                println!(
                    "{:<9} {:<6} k={:<3} timeslots {:>6} cycles {:>4}",
                    r.defense.label(),
                    r.goal.label(),
                    r.k,
                    show(r.timeslots),
                    show(r.cycles)
                );
            }
            emit(&prep, &report)
        }
        Command::Resiliency(common) => {
            let prep = common.prepare()?;
            let (defenses, goals) = common.grid(&prep);
            let report = resiliency_experiment(&prep, &prep.scenario.experiments.resiliency_horizons, &defenses, &goals)?;
            for r in &report.resiliency {
                println!(
                    "{:<9} {:<6} horizon {:>6} k {:>4} ({:?}, {} subsets)",
                    r.defense.label(),
                    r.goal.label(),
                    r.horizon,
                    r.label(),
                    r.bound,
                    r.subsets_tested
                );
            }
            emit(&prep, &report)
        }
        Command::Bench(common) => {
            let prep = common.prepare()?;
            let (defenses, goals) = common.grid(&prep);
            let e = &prep.scenario.experiments;
            let report = scalability_bench(&prep, &e.bench_horizons, &defenses, &goals, e.bench_repeats)?;
            for r in &report.scalability {
                println!(
                    "{:<9} {:<6} timeslots {:>6} rows {:>6} lp solves {:>7} wall {:.3} s",
                    r.defense.label(),
                    r.goal.label(),
                    r.timeslots,
                    r.model_rows,
                    r.lp_solves,
                    r.wall_s
                );
            }
            for f in &report.fits {
                println!("{:<9} {:<6} fit slope {:.3e} s/timeslot r2 {:.4}", f.defense.label(), f.goal.label(), f.slope, f.r2);
            }
            emit(&prep, &report)
        }
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Infeasible(_) => 2,
        HarnessError::Attack(AttackError::VerificationMismatch(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for infeasible attacks.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
