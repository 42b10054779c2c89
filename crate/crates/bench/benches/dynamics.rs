use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ddro_core::{
    generate_regression_data, step, vector_field, FeasibleRegime, IntegratorConfig, NetworkGraph, Objective,
    ProblemInstance, RegressionGenerator,
};

fn ring10() -> ProblemInstance {
    let data = generate_regression_data(&RegressionGenerator::default(), 10, 1).unwrap();
    let obj = Objective::least_squares(1.0, 5).unwrap();
    ProblemInstance::new(NetworkGraph::ring_with_chords(), data, obj, 0.05).unwrap()
}

fn ring10_state(p: &ProblemInstance) -> ddro_core::SystemState {
    let mut s = p.zero_state();
    for (i, v) in s.x.iter_mut().enumerate() {
        *v = (i % 5) as f64 * 0.7;
    }
    s.lambda.iter_mut().for_each(|l| *l = 60.0);
    s
}

fn bench_dynamics(c: &mut Criterion) {
    let p = ring10();
    let s = ring10_state(&p);
    let cfg = IntegratorConfig { step: 0.1, ..Default::default() };
    c.bench_function("vector_field ring10", |b| b.iter(|| vector_field(&p, black_box(&s)).unwrap()));
    c.bench_function("step ring10", |b| b.iter(|| step(&p, black_box(&s), &cfg).unwrap()));
    c.bench_function("certificate ring10", |b| {
        b.iter(|| p.certificate(black_box(&[1.0, 4.0, 3.0, 2.0, 0.0]), 90.0).unwrap())
    });
}

fn bench_projection(c: &mut Criterion) {
    let ls = FeasibleRegime::LeastSquares { a: 1.0 };
    let x = [1.0, 4.0, 3.0, 2.0, 0.5];
    c.bench_function("least-squares projection (active)", |b| {
        b.iter(|| ls.project(black_box(&x), black_box(5.0)).unwrap())
    });
    c.bench_function("least-squares projection (inactive)", |b| {
        b.iter(|| ls.project(black_box(&x), black_box(50.0)).unwrap())
    });
}

criterion_group!(benches, bench_dynamics, bench_projection);
criterion_main!(benches);
