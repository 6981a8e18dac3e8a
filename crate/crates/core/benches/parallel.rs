//! Sequential vs parallel execution of the data-parallel stages: ADM
//! training, the pulse-response model and the accessibility sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gridfdi_core::adm::AdmModel;
use gridfdi_core::attack::{DetectorMode, Goal, ResponseModel};
use gridfdi_core::harness::{accessibility_sweep, Access, Overrides, Prepared};
use gridfdi_core::par::Execution;

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/desk6.json");

fn prepared(exec: Execution) -> Prepared {
    let mut p = Prepared::load(SCENARIO, &Overrides::default()).unwrap();
    p.scenario.synthesis.exec = exec;
    p
}

fn bench(c: &mut Criterion) {
    let modes = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

    let mut g = c.benchmark_group("adm_training");
    for (name, exec) in modes {
        let p = prepared(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| AdmModel::train(&p.training, p.scenario.detector.adm, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("response_model");
    for (name, exec) in modes {
        let p = prepared(exec);
        let problem = p.problem(DetectorMode::None, Goal::Uf, &p.access_buses(&Access::All)).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| ResponseModel::new(&problem).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("accessibility_sweep");
    g.sample_size(10);
    for (name, exec) in modes {
        let p = prepared(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| accessibility_sweep(&p, &[1, 2, 3], &[DetectorMode::None, DetectorMode::RulesBdd], &[Goal::Uf, Goal::Of]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
