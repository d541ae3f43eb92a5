use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deputy_core::dot::{export_dot, View};
use deputy_core::sampler::{build_path, Strategy};
use deputy_core::snapshot::{load, save};
use deputy_core::verifier::verify_all;
use deputy_core::{run, ScheduleConfig};

fn runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(10);
    for (n, schedule) in [(1, "canonical"), (2, "canonical"), (3, "canonical"), (2, "focused::2")] {
        let schedule: ScheduleConfig = schedule.parse().unwrap();
        g.bench_with_input(BenchmarkId::new(format!("n{n}"), &schedule), &schedule, |b, s| {
            b.iter(|| run(n, 5000, s.clone()).unwrap())
        });
    }
    g.finish();
}

fn downstream(c: &mut Criterion) {
    let state = run(2, 5000, "focused::2".parse().unwrap()).unwrap();
    let bytes = save(&state);
    let mut g = c.benchmark_group("focused-n2-5000");
    g.sample_size(20);
    g.bench_function("verify_all", |b| b.iter(|| verify_all(&state)));
    g.bench_function("save", |b| b.iter(|| save(&state)));
    g.bench_function("load", |b| b.iter(|| load(&bytes).unwrap()));
    g.bench_function("export_deputies", |b| b.iter(|| export_dot(&state, View::Deputies)));
    g.bench_function("build_path", |b| b.iter(|| build_path(&state, 12, &Strategy::Through { sigma: "1".parse().unwrap() })));
    g.finish();
}

criterion_group!(benches, runs, downstream);
criterion_main!(benches);
