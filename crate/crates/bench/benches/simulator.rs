use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ralp_bench::single_job;
use ralp_core::sim::{bundled_scenario, simulate_consolidation, simulate_run};
use ralp_core::{Catalog, Strategy};

fn strategies(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate/vgg11");
    let cases = [
        ("baseline-8w8ps", Strategy::BaselinePs, 8, 8),
        ("ralp-15w", Strategy::Ralp { split_index: 13 }, 15, 1),
        ("ring-16w", Strategy::RingAllreduce, 16, 0),
    ];
    for (label, strategy, w, ps) in cases {
        let s = single_job("vgg11", strategy, w, ps, 10);
        group.bench_function(label, |b| b.iter(|| black_box(simulate_run(&s).unwrap())));
    }
    group.finish();
}

fn ring_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate/ring_workers");
    for w in [4usize, 8, 16, 32] {
        let s = single_job("resnet-50", Strategy::RingAllreduce, w, 0, 5);
        group.bench_with_input(BenchmarkId::from_parameter(w), &w, |b, _| {
            b.iter(|| black_box(simulate_run(&s).unwrap()))
        });
    }
    group.finish();
}

fn consolidation(c: &mut Criterion) {
    let base = bundled_scenario("lenet_3w1ps", &Catalog::bundled()).unwrap().unwrap();
    c.bench_function("consolidate/lenet_x8", |b| {
        b.iter(|| black_box(simulate_consolidation(&base, 8).unwrap()))
    });
}

criterion_group!(benches, strategies, ring_scaling, consolidation);
criterion_main!(benches);
