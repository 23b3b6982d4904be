use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use particle_em::samplers::{pga_step, ula_step};
use particle_em::{LatentModel, ParameterState, StepRng};
use particle_em_bench::{bnn, latent_point, toy};

fn bench_ula(c: &mut Criterion) {
    let mut group = c.benchmark_group("ula_step");
    for &n in &[10usize, 100, 1000] {
        let (model, mut cloud) = toy(100, n);
        let theta = [model.theta_star()];
        let rng = StepRng::new(7);
        group.bench_with_input(BenchmarkId::new("toy_d100", n), &n, |b, _| {
            let mut k = 0;
            b.iter(|| {
                ula_step(&model, &theta, &mut cloud, 0.01, &rng, k);
                k += 1;
            })
        });
    }
    group.finish();
}

fn bench_pga(c: &mut Criterion) {
    let mut group = c.benchmark_group("pga_step");
    for &n in &[10usize, 100, 1000] {
        let (model, mut cloud) = toy(100, n);
        let mut state = ParameterState::new(vec![0.0], 0);
        let rng = StepRng::new(7);
        group.bench_with_input(BenchmarkId::new("toy_d100", n), &n, |b, _| {
            let mut k = 0;
            b.iter(|| {
                pga_step(&model, &mut state, &mut cloud, 0.01, None, &rng, k);
                k += 1;
            })
        });
    }
    group.finish();
}

fn bench_bnn_gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("bnn_gradient");
    group.sample_size(20);
    let model = bnn(500, 784, 20);
    let x = latent_point(&model);
    let theta = vec![0.0; model.d_theta()];
    let mut gx = vec![0.0; model.d_x()];
    let mut gt = vec![0.0; model.d_theta()];
    group.bench_function("grad_x_500x784x20", |b| {
        b.iter(|| model.grad_x(black_box(&theta), black_box(&x), &mut gx))
    });
    group.bench_function("grad_theta_500x784x20", |b| {
        b.iter(|| model.grad_theta(black_box(&theta), black_box(&x), &mut gt))
    });
    group.finish();
}

criterion_group!(benches, bench_ula, bench_pga, bench_bnn_gradients);
criterion_main!(benches);
