use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fedada_bench::gaussian_vector;
use fedada_core::cover::{build_cover, CoverPolicy};
use fedada_core::local::{local_step, LocalOptConfig, LocalOptKind, LocalOptState};
use fedada_core::numeric::ParamVector;
use fedada_core::server::{server_update, ServerConfig, ServerKind, ServerState};

fn local_steps(c: &mut Criterion) {
    let (m, n) = (256, 256);
    let d = m * n;
    let g = gaussian_vector(d, 1);
    let x = ParamVector::zeros(d);
    let cover = build_cover(&[m, n], CoverPolicy::RowCol).unwrap();
    let mut group = c.benchmark_group("local_step_256x256");
    group.throughput(Throughput::Elements(d as u64));
    for kind in [
        LocalOptKind::Sgd,
        LocalOptKind::Agdu,
        LocalOptKind::Admu,
        LocalOptKind::Sm3I,
        LocalOptKind::Sm3Ii,
        LocalOptKind::Sm3Adam,
    ] {
        let mut cfg = LocalOptConfig::new(kind, 0.01);
        if kind.uses_cover() {
            cfg = cfg.with_cover(cover.clone());
        }
        let mut st = LocalOptState::new(&cfg, d);
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| local_step(&x, &g, &mut st, &cfg, 0.01).unwrap())
        });
    }
    group.finish();
}

fn server_steps(c: &mut Criterion) {
    let d = 65_536;
    let delta = gaussian_vector(d, 2);
    let mut group = c.benchmark_group("server_update");
    group.throughput(Throughput::Elements(d as u64));
    for kind in [ServerKind::Avg, ServerKind::Adagrad, ServerKind::Adam] {
        let cfg = ServerConfig::new(kind, 0.01, 1e-3);
        let st = ServerState::new(ParamVector::zeros(d), &cfg);
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter_batched(
                || st.clone(),
                |s| server_update(s, &delta, &cfg).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, local_steps, server_steps);
criterion_main!(benches);
