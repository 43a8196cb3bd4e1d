use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fracheat::kernels::{heat_kernel, m_eps_kernel, m_kernel, HeatKernelConfig, KernelConfig};
use fracheat::quadrature::{k_eps_x, kx, QuadratureConfig};
use fracheat_bench::hurst;

fn kernels(c: &mut Criterion) {
    let heat = HeatKernelConfig::default();
    c.bench_function("heat_kernel small t", |b| b.iter(|| heat_kernel(black_box(0.01), 0.3, 0.4, &heat)));
    c.bench_function("heat_kernel large t", |b| b.iter(|| heat_kernel(black_box(0.7), 0.3, 0.4, &heat)));

    let m = KernelConfig::new(hurst());
    c.bench_function("m_kernel diagonal", |b| b.iter(|| m_kernel(black_box(0.5), 0.25, 0.5, 0.5, &m)));
    c.bench_function("m_eps_kernel eps=0.01", |b| {
        b.iter(|| m_eps_kernel(black_box(0.5), 0.25, 0.5, 0.5, 0.01, &m))
    });
}

fn quadrature(c: &mut Criterion) {
    let q = QuadratureConfig::new(hurst());
    let mut g = c.benchmark_group("quadrature");
    g.sample_size(20);
    g.bench_function("kx(0.5, 0.5)", |b| b.iter(|| kx(black_box(0.5), 0.5, &q)));
    g.bench_function("k_eps_x eps=0.01", |b| b.iter(|| k_eps_x(black_box(0.5), 0.5, 0.01, &q)));
    g.finish();
}

criterion_group!(benches, kernels, quadrature);
criterion_main!(benches);
