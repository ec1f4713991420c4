use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vponsim::experiment::sweep;
use vponsim::par::ExecMode;
use vponsim::scenario::load_scenario;
use vponsim::sim::RunOptions;

fn bench_sweep(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/isolation.json");
    let mut scenario = load_scenario(&path).expect("bundled scenario loads");
    // shorter horizon keeps one iteration well under a second
    scenario.file.sim_duration_ns = 200_000_000;
    let loads = [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0];

    let mut group = c.benchmark_group("load_sweep_8_points");
    group.sample_size(10);
    for (label, exec) in [
        ("sequential", ExecMode::Sequential),
        ("parallel", ExecMode::Parallel),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &exec, |b, &exec| {
            b.iter(|| sweep(&scenario, &loads, exec, RunOptions::default()).expect("sweep runs"));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
