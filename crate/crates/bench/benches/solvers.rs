use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use predprey_bench::{fq_run, lyap_a, lyap_b, plant, U_STAR};
use predprey_core::lyapunov::{find_sigma, roa_estimate};
use predprey_core::simulate::{ic_from_spec, simulate_direct, simulate_transformed, step_direct};
use predprey_core::{compute_equilibrium, solve_lotka_sharpe, IcShape, IcSpec};

fn equilibrium(c: &mut Criterion) {
    let mut g = c.benchmark_group("equilibrium");
    for n in [200, 400, 800] {
        let p = plant(n);
        g.bench_with_input(BenchmarkId::new("lotka_sharpe", n), &p, |b, p| {
            b.iter(|| {
                solve_lotka_sharpe(&p.kernels.mortality[0], &p.kernels.birth[0], &p.grid).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("compute", n), &p, |b, p| {
            b.iter(|| compute_equilibrium(&p.kernels, black_box(U_STAR), &p.grid).unwrap())
        });
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solvers");
    g.sample_size(10);
    for n in [100, 400] {
        let p = plant(n);
        let x = ic_from_spec(&IcSpec::new(IcShape::Fq), &p).unwrap();
        g.bench_with_input(BenchmarkId::new("direct_step", n), &p, |b, p| {
            b.iter(|| step_direct(black_box(&x), U_STAR, p).unwrap())
        });
        let cfg = fq_run(&p, 5.0, false);
        g.bench_with_input(BenchmarkId::new("direct_run_t5", n), &p, |b, p| {
            b.iter(|| simulate_direct(p, &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("transformed_run_t5", n), &p, |b, p| {
            b.iter(|| simulate_transformed(p, &cfg).unwrap())
        });
        let with_v = fq_run(&p, 5.0, true);
        g.bench_with_input(BenchmarkId::new("direct_run_t5_lyapunov", n), &p, |b, p| {
            b.iter(|| simulate_direct(p, &with_v).unwrap())
        });
    }
    g.finish();
}

fn lyapunov(c: &mut Criterion) {
    let p = plant(400);
    let mut g = c.benchmark_group("lyapunov");
    g.bench_function("find_sigma", |b| {
        b.iter(|| find_sigma(&p.eq.ktilde[0], &p.grid).unwrap())
    });
    let a = lyap_a(&p);
    let bcfg = lyap_b(&p);
    g.bench_function("roa_control_a", |b| {
        b.iter(|| roa_estimate(&a, &p.eq).unwrap())
    });
    g.bench_function("roa_control_b", |b| {
        b.iter(|| roa_estimate(&bcfg, &p.eq).unwrap())
    });
    g.finish();
}

criterion_group!(benches, equilibrium, solvers, lyapunov);
criterion_main!(benches);
