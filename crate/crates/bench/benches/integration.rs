use criterion::{black_box, criterion_group, criterion_main, Criterion};

use bilinctl::{
    catalog, gradient_iteration, integrate_dual, integrate_forward, krotov_iteration,
    transversality_costate,
};

fn forward(c: &mut Criterion) {
    let ex = catalog::example(2).unwrap();
    c.bench_function("forward rk4, 10001 nodes", |b| {
        b.iter(|| {
            integrate_forward(black_box(&ex.problem), black_box(&ex.initial_control)).unwrap()
        })
    });
    let x = integrate_forward(&ex.problem, &ex.initial_control).unwrap();
    let psi_t = transversality_costate(&ex.problem.l, &x.terminal()).unwrap();
    c.bench_function("dual rk4, 10001 nodes", |b| {
        b.iter(|| integrate_dual(&ex.problem, &ex.initial_control, black_box(&psi_t)).unwrap())
    });
}

fn iterations(c: &mut Criterion) {
    let ex = catalog::example(1).unwrap();
    let x = integrate_forward(&ex.problem, &ex.initial_control).unwrap();
    c.bench_function("krotov iteration, example 1", |b| {
        b.iter(|| krotov_iteration(&ex.problem, &ex.initial_control, black_box(&x)).unwrap())
    });
    let config = bilinctl::SolverConfig::new(bilinctl::Method::Gradient, ex.grid).gradient;
    c.bench_function("gradient iteration, example 1", |b| {
        b.iter(|| {
            gradient_iteration(&ex.problem, &ex.initial_control, black_box(&x), &config).unwrap()
        })
    });
}

criterion_group!(benches, forward, iterations);
criterion_main!(benches);
