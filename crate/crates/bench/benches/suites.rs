//! Benchmarks for the kernels that dominate experiment wall time: dense
//! covariance factorization, batched field sampling, per-replicate mass
//! evaluation, and the heavy-order statistics.

use criterion::{criterion_group, criterion_main, Criterion};
use gmclab_core::geometry::UHPRect;
use gmclab_core::gmc::{GmcParams, MassEvaluator, MassResult};
use gmclab_core::kernel::{build_grid, factorize, CovarianceSpec, FactorizedCovariance};
use gmclab_core::moments::{estimate_moment, tail_index, threshold_pc};
use gmclab_core::sampler::{normal_quantile, sample_batch, sample_field};

const EPS: f64 = 0.25 / 32.0;

fn quarter_box_factor() -> FactorizedCovariance {
    // 32 x 32 = 1024 cells, the mid-size grid of the divergence scan.
    let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
    let grid = build_grid(&region, EPS).unwrap();
    let spec = CovarianceSpec::new(EPS, 0.0).unwrap();
    factorize(&grid, &spec).unwrap()
}

/// Deterministic heavy-tailed log masses, scrambled so bucketed estimators
/// see no monotone structure.
fn synthetic_masses(n: usize, gamma: f64) -> Vec<MassResult> {
    (0..n)
        .map(|i| {
            let u = (i as f64 * 0.6180339887498949).fract().max(1e-12);
            MassResult {
                replicate_id: i as u64,
                gamma,
                log_mass: 2.5 * normal_quantile(u) - 1.0,
            }
        })
        .collect()
}

fn bench_factorize(c: &mut Criterion) {
    let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
    let grid = build_grid(&region, EPS).unwrap();
    let spec = CovarianceSpec::new(EPS, 0.0).unwrap();
    let mut g = c.benchmark_group("kernel");
    g.sample_size(10);
    g.bench_function("factorize_1024_cells", |b| {
        b.iter(|| factorize(&grid, &spec).unwrap())
    });
    g.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let fac = quarter_box_factor();
    let mut g = c.benchmark_group("sampler");
    g.sample_size(10);
    g.bench_function("sample_field_1024_cells", |b| {
        b.iter(|| sample_field(&fac, 1, 0))
    });
    g.bench_function("sample_batch_256_replicates", |b| {
        b.iter(|| {
            let mut acc = 0.0f64;
            sample_batch(&fac, 1, 0, 256, 1, |_, values| acc += values[0]);
            acc
        })
    });
    g.finish();
}

fn bench_mass_evaluation(c: &mut Criterion) {
    let fac = quarter_box_factor();
    let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
    let params = GmcParams::new(1.8).unwrap();
    let eval = MassEvaluator::new(&fac, &[&region], &params).unwrap();
    let sample = sample_field(&fac, 1, 0);
    let mut out = Vec::new();
    c.bench_function("gmc_log_mass_1024_cells", |b| {
        b.iter(|| {
            eval.log_masses(0, &sample.values, &mut out);
            out[0].log_mass
        })
    });
}

fn bench_statistics(c: &mut Criterion) {
    let gamma = 1.8;
    let masses = synthetic_masses(100_000, gamma);
    let logs: Vec<f64> = masses.iter().map(|m| m.log_mass).collect();
    let heavy_p = 0.9 * threshold_pc(gamma);
    c.bench_function("estimate_moment_mom_100k", |b| {
        b.iter(|| estimate_moment(&masses, heavy_p).unwrap().mean)
    });
    c.bench_function("hill_tail_index_100k", |b| {
        b.iter(|| tail_index(&logs, 2154).unwrap().alpha)
    });
}

criterion_group!(
    benches,
    bench_factorize,
    bench_sampling,
    bench_mass_evaluation,
    bench_statistics
);
criterion_main!(benches);
