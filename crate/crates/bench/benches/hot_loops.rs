use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use memoir_bench::{desk_spec, sample_cloud, Fixture};
use memoir_core::attractor::hausdorff_semidist;
use memoir_core::spectral::NonlinearPlan;
use memoir_core::Field;

fn bench_memory_quadrature(c: &mut Criterion) {
    let fx = Fixture::new(16, 4000, 1e-3);
    let (integrator, state) = fx.warmed_state(3000);
    let kernel = fx.spec.kernel.as_ref().unwrap();
    let lambdas = fx.spec.basis.lambdas();
    let _ = &integrator;
    c.bench_function("memory_quadrature_n16", |b| {
        b.iter(|| black_box(state.ledger.memory_and_norm(kernel, lambdas, false)))
    });
}

fn bench_nonlinearity(c: &mut Criterion) {
    let spec = desk_spec(16);
    let plan = NonlinearPlan::new(&spec.basis, 3);
    let field = Field::from_coeffs((0..16).map(|j| 0.5 / (1.0 + j as f64)).collect());
    c.bench_function("eval_f_n16", |b| {
        b.iter(|| black_box(spec.nonlinearity.eval_field(&plan, &field)))
    });
}

fn bench_solver_step(c: &mut Criterion) {
    let fx = Fixture::new(16, 2_000_000, 1e-3);
    let (integrator, state) = fx.warmed_state(2000);
    c.bench_function("solver_step_n16", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| {
                integrator.step(&mut s).unwrap();
                black_box(s.v().coeffs[0])
            },
            criterion::BatchSize::LargeInput,
        )
    });
}

fn bench_hausdorff(c: &mut Criterion) {
    let c1 = sample_cloud(16, 64, 1);
    let c2 = sample_cloud(16, 64, 2);
    let lambdas: Vec<f64> = (1..=16).map(|j| (j * j) as f64).collect();
    c.bench_function("hausdorff_64x64_n16", |b| {
        b.iter(|| black_box(hausdorff_semidist(&c1, &c2, &lambdas).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_memory_quadrature,
    bench_nonlinearity,
    bench_solver_step,
    bench_hausdorff
);
criterion_main!(benches);
