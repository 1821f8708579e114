use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpkm_bench::{planted, uniform};
use mpkm_core::mpc::{khop_approx_sum, khop_min_l, Cluster};
use mpkm_core::{
    build_spanner, make_constants, solve_fl, solve_kmeans, ClusterConfig, FlConfig, FlInstance, KMeansConfig, KMeansInstance,
    LshParams, Mode,
};

fn spanner(c: &mut Criterion) {
    let mut group = c.benchmark_group("spanner");
    group.sample_size(10);
    for n in [256, 1024, 4096] {
        let points = uniform(n, 4, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, p| {
            b.iter(|| build_spanner(p, 0.4, &LshParams::new(4, 7)).unwrap())
        });
    }
    group.finish();
}

fn primitives(c: &mut Criterion) {
    let n = 2000;
    let points = uniform(n, 2, 2);
    let graph = build_spanner(&points, 0.4, &LshParams::new(2, 3)).unwrap();
    let adj = graph.adjacency();
    let inputs: Vec<Vec<u64>> = (0..n as u64).map(|v| vec![v * 7919 % 10007]).collect();
    let values: Vec<f64> = (0..n).map(|v| (v % 13) as f64).collect();
    let mut config = ClusterConfig::new(n, 0.5, 0.4).unwrap();
    config.budget_slack = f64::INFINITY;
    c.bench_function("khop_min_l/t=2,l=4", |b| {
        b.iter(|| khop_min_l(&mut Cluster::new(config.clone()), &adj, &inputs, 4, 2).unwrap())
    });
    c.bench_function("khop_approx_sum/t=2", |b| {
        b.iter(|| khop_approx_sum(&mut Cluster::new(config.clone()), &adj, &values, 2, 0.5, 1).unwrap())
    });
}

fn facility_location(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_fl");
    group.sample_size(10);
    for (mode, gamma, n) in [(Mode::Exact, 1.0, 256), (Mode::Exact, 5.0, 256), (Mode::Lsh, 5.0, 512)] {
        let inst = FlInstance::colocated(&uniform(n, 3, 3), 10.0).unwrap();
        let config = FlConfig::new(mode, make_constants(gamma).unwrap()).with_seed(1);
        group.bench_function(format!("{mode:?}/gamma={gamma}/n={n}"), |b| b.iter(|| solve_fl(&inst, &config).unwrap()));
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_kmeans");
    group.sample_size(10);
    let km = KMeansInstance::new(planted(4, 8, 1e7, 2, 4), 4).unwrap();
    let config = KMeansConfig::new(FlConfig::new(Mode::Exact, make_constants(1.0).unwrap()).with_seed(2));
    group.bench_function("planted/k=4,n=32", |b| b.iter(|| solve_kmeans(&km, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, spanner, primitives, facility_location, kmeans);
criterion_main!(benches);
