use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use daot_core::scenarios::{scenario_61, scenario_63_network, ScenarioSpec};
use daot_core::{Solver, SweepMode};

fn prepared(spec: ScenarioSpec) -> Solver {
    spec.instance().expect("valid scenario").solver().expect("solver builds")
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    for (label, spec) in [("scenario_61_log", scenario_61()), ("scenario_63_linear", scenario_63_network())] {
        for mode in [SweepMode::GaussSeidel, SweepMode::Jacobi] {
            let mut spec = spec.clone();
            spec.solver.sweep = mode;
            let base = prepared(spec);
            group.bench_function(format!("{label}/{mode:?}"), |b| {
                b.iter_batched(|| base.clone(), |mut s| black_box(s.sweep().unwrap()), BatchSize::SmallInput)
            });
        }
    }
    group.finish();
}

fn full_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("scenario_63", |b| {
        let base = prepared(scenario_63_network());
        b.iter_batched(|| base.clone(), |mut s| black_box(s.run().unwrap()), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, sweeps, full_solve);
criterion_main!(benches);
