use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use minqds::gallery::random_exact;
use minqds::linalg::{self, eye};
use minqds::models::{build_transport_jump, HalfLineGrid};
use minqds::resolvent::{defect_iteration, q_lambda};
use minqds::timedomain::evolve;
use minqds::ResolventConfig;

fn products(c: &mut Criterion) {
    let mut g = c.benchmark_group("mul");
    for n in [32, 128] {
        let a = random_exact(n, 1, 1).g;
        g.bench_with_input(BenchmarkId::new("zgemm", n), &a, |bch, a| bch.iter(|| linalg::mul(black_box(a), a)));
        g.bench_with_input(BenchmarkId::new("nalgebra", n), &a, |bch, a| bch.iter(|| black_box(a) * a));
    }
    g.finish();
}

fn resolvent_maps(c: &mut Criterion) {
    let mut g = c.benchmark_group("q_lambda");
    for n in [16, 64] {
        let m = random_exact(n, 2, 3);
        let id = eye(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |bch, m| bch.iter(|| q_lambda(m, 1.0, black_box(&id)).unwrap()));
    }
    g.finish();
}

fn defect(c: &mut Criterion) {
    let grid = HalfLineGrid::new(64, 24.0).unwrap();
    let g = grid.sample(|x| 2f64.sqrt() * (-x).exp());
    let bundle = build_transport_jump(&g, &grid, true).unwrap();
    c.bench_function("defect_iteration/transport_64", |bch| bch.iter(|| defect_iteration(&bundle.model, &ResolventConfig::with_lambda(5.0)).unwrap()));
}

fn evolution(c: &mut Criterion) {
    let m = random_exact(8, 2, 5);
    let id = eye(8);
    c.bench_function("evolve/superoperator_8", |bch| bch.iter(|| evolve(&m, black_box(&id), 1.0).unwrap()));
    let m = random_exact(24, 2, 6);
    let id = eye(24);
    c.bench_function("evolve/ode_24", |bch| bch.iter(|| evolve(&m, black_box(&id), 1.0).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = products, resolvent_maps, defect, evolution
}
criterion_main!(benches);
