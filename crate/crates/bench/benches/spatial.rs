use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vibrancy_bench::random_points;
use vibrancy_core::geometry::SpatialIndex;

fn build(c: &mut Criterion) {
    let mut g = c.benchmark_group("index_build");
    g.sample_size(10);
    for n in [10_000, 100_000, 1_000_000] {
        let points = random_points(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, p| b.iter(|| SpatialIndex::build(p.clone())));
    }
    g.finish();
}

fn query(c: &mut Criterion) {
    let index = SpatialIndex::build(random_points(1_000_000, 2));
    let centers = random_points(1_000, 3);
    let mut g = c.benchmark_group("radius_count_1e6");
    for r in [50.0, 100.0] {
        g.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| centers.iter().map(|&p| index.count_within(p, r).unwrap()).sum::<usize>())
        });
    }
    g.finish();
    c.bench_function("radius_query_1e6_r50", |b| {
        b.iter(|| centers.iter().map(|&p| index.radius_query(black_box(p), 50.0).unwrap().len()).sum::<usize>())
    });
}

criterion_group!(benches, build, query);
criterion_main!(benches);
