use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use std::path::PathBuf;
use wbsim::batch::{dynamics_sweep, run_batch, ExecutionMode};
use wbsim::fixtures;
use wbsim::harness::Scenario;
use wbsim::kindyn::default_gravity;

const MODES: [(&str, ExecutionMode); 2] = [("sequential", ExecutionMode::Sequential), ("parallel", ExecutionMode::Parallel)];

fn sweep(c: &mut Criterion) {
    let model = fixtures::humanoid();
    let states: Vec<_> = (0..256).map(|s| fixtures::random_state(&model, s)).collect();
    let g = default_gravity();
    let mut group = c.benchmark_group("dynamics_sweep");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, states.len()), |b| {
            b.iter(|| dynamics_sweep(&model, black_box(&states), &g, mode))
        });
    }
    group.finish();
}

fn scenarios(c: &mut Criterion) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let batch: Vec<Scenario> = ["box_rest", "box_slide", "sphere_roll", "four_bar", "humanoid_squat", "arm_torque"]
        .iter()
        .map(|n| Scenario::load(dir.join(format!("{n}.toml"))).unwrap().with_overrides(Some(0.25), None).unwrap())
        .collect();
    let mut group = c.benchmark_group("scenario_batch");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, batch.len()), |b| b.iter(|| run_batch(black_box(&batch), mode)));
    }
    group.finish();
}

criterion_group!(benches, sweep, scenarios);
criterion_main!(benches);
