use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vibrancy_bench::regression_fixture;
use vibrancy_core::regression::{huber_fit, wls, Design, HuberConfig};

fn huber(c: &mut Criterion) {
    let mut g = c.benchmark_group("huber_fit");
    for n in [100, 1_325, 10_000] {
        let (x, y) = regression_fixture(n, 7);
        let design = Design::with_intercept(n, vec![("x".into(), x)]);
        g.bench_with_input(BenchmarkId::from_parameter(n), &(design, y), |b, (d, y)| {
            b.iter(|| huber_fit(d, y, &HuberConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn least_squares(c: &mut Criterion) {
    let n = 1_325;
    let (x, y) = regression_fixture(n, 8);
    let x2: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let x3: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
    let design = Design::with_intercept(n, vec![("a".into(), x), ("b".into(), x2), ("c".into(), x3)]);
    let w = vec![1.0; n];
    c.bench_function("wls_1325x4", |b| b.iter(|| wls(&design, &y, &w).unwrap()));
}

criterion_group!(benches, huber, least_squares);
criterion_main!(benches);
