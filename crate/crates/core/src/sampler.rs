//! Reproducible Gaussian field samples from a factorized covariance.
//!
//! Each replicate draws its own counter-based stream: a ChaCha cipher keyed
//! by the run seed with the replicate id as the stream number, mapped to
//! standard normals through the inverse CDF. Cell `i` always consumes draw
//! `i` of the stream, so a sample depends only on `(seed, replicate_id)` and
//! the factor, never on batch geometry, worker count, or evaluation order.
//! Correlation is imposed by `x = L g` computed with a fixed panel blocking,
//! which keeps the floating-point reduction order identical between single
//! and batched evaluation.

use crate::kernel::FactorizedCovariance;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replicates per GEMM block. Fixed: changing it would change nothing
/// mathematically but the panel GEMM calls must stay shape-stable for
/// bitwise reproducibility tests against recorded fixtures.
pub const SAMPLE_BLOCK: usize = 64;

/// One field replicate: the correlated values at every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub replicate_id: u64,
    pub values: Vec<f64>,
}

/// Maps a `u64` to the open interval `(0, 1)` with a centered 53-bit lattice.
#[inline]
fn to_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

#[inline]
fn horner(r: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * r + c)
}

/// Inverse standard normal CDF (Wichura's double-precision rational
/// approximation; absolute error below 1e-15 over (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    // Numerator/denominator coefficients, highest degree first.
    const A: [f64; 8] = [
        2.5090809287301226727e3,
        3.3430575583588128105e4,
        6.7265770927008700853e4,
        4.5921953931549871457e4,
        1.3731693765509461125e4,
        1.9715909503065514427e3,
        1.3314166789178437745e2,
        3.3871328727963666080e0,
    ];
    const B: [f64; 8] = [
        5.2264952788528545610e3,
        2.8729085735721942674e4,
        3.9307895800092710610e4,
        2.1213794301586595867e4,
        5.3941960214247511077e3,
        6.8718700749205790830e2,
        4.2313330701600911252e1,
        1.0,
    ];
    const C: [f64; 8] = [
        7.74545014278341407640e-4,
        2.27238449892691845833e-2,
        2.41780725177450611770e-1,
        1.27045825245236838258e0,
        3.64784832476320460504e0,
        5.76949722146069140550e0,
        4.63033784615654529590e0,
        1.42343711074968357734e0,
    ];
    const D: [f64; 8] = [
        1.05075007164441684324e-9,
        5.47593808499534494600e-4,
        1.51986665636164571966e-2,
        1.48103976427480074590e-1,
        6.89767334985100004550e-1,
        1.67638483018380384940e0,
        2.05319162663775882187e0,
        1.0,
    ];
    const E: [f64; 8] = [
        2.01033439929228813265e-7,
        2.71155556874348757815e-5,
        1.24266094738807843860e-3,
        2.65321895265761230930e-2,
        2.96560571828504891230e-1,
        1.78482653991729133580e0,
        5.46378491116411436990e0,
        6.65790464350110377720e0,
    ];
    const F: [f64; 8] = [
        2.04426310338993978564e-15,
        1.42151175831644588870e-7,
        1.84631831751005468180e-5,
        7.86869131145613294790e-4,
        1.48753612908506150230e-2,
        1.36929880922735805310e-1,
        5.99832206555887937690e-1,
        1.0,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(r, &A) / horner(r, &B);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        horner(r, &C) / horner(r, &D)
    } else {
        let r = r - 5.0;
        horner(r, &E) / horner(r, &F)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn stream_rng(seed: u64, replicate_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_id);
    rng
}

/// Writes the first `out.len()` standard normals of replicate stream
/// `(seed, replicate_id)`.
pub fn standard_normals(seed: u64, replicate_id: u64, out: &mut [f64]) {
    let mut rng = stream_rng(seed, replicate_id);
    for v in out.iter_mut() {
        *v = normal_quantile(to_unit(rng.next_u64()));
    }
}

/// Standard normal draw `index` past the cell block of a replicate stream,
/// for couplings that need extra shared noise (for example the common boost
/// in the scaling comparison). Cell draws occupy positions `0..n_cells`.
pub fn auxiliary_normal(seed: u64, replicate_id: u64, n_cells: usize, index: u64) -> f64 {
    let mut rng = stream_rng(seed, replicate_id);
    // Each u64 draw consumes two 32-bit cipher words.
    rng.set_word_pos(2 * (n_cells as u128 + index as u128));
    normal_quantile(to_unit(rng.next_u64()))
}

/// `out = L g` for column-major `g` (`n x b`), with `L` the row-major lower
/// factor. Fixed panel width keeps the reduction order independent of the
/// batch width, so column `j` of a batch equals the single-column product.
pub(crate) fn lower_multiply(l: &[f64], n: usize, g: &[f64], b: usize, out: &mut [f64]) {
    const KB: usize = 256;
    debug_assert_eq!(g.len(), n * b);
    debug_assert_eq!(out.len(), n * b);
    out.fill(0.0);
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + KB).min(n);
        let m = n - k0;
        unsafe {
            matrixmultiply::dgemm(
                m,
                k1 - k0,
                b,
                1.0,
                l.as_ptr().add(k0 * n + k0),
                n as isize,
                1,
                g.as_ptr().add(k0),
                1,
                n as isize,
                1.0,
                out.as_mut_ptr().add(k0),
                1,
                n as isize,
            );
        }
        k0 = k1;
    }
}

/// Column-major block of correlated samples for consecutive replicate ids.
fn compute_block(fac: &FactorizedCovariance, seed: u64, ids: std::ops::Range<u64>) -> Vec<f64> {
    let n = fac.n();
    let b = (ids.end - ids.start) as usize;
    let mut g = vec![0.0f64; n * b];
    for (j, id) in ids.clone().enumerate() {
        standard_normals(seed, id, &mut g[j * n..(j + 1) * n]);
    }
    let mut x = vec![0.0f64; n * b];
    lower_multiply(fac.factor(), n, &g, b, &mut x);
    x
}

/// Draws one field replicate.
pub fn sample_field(fac: &FactorizedCovariance, seed: u64, replicate_id: u64) -> FieldSample {
    let values = compute_block(fac, seed, replicate_id..replicate_id + 1);
    FieldSample { replicate_id, values }
}

/// The zero field with the replicate's shape, for deterministic checks.
pub fn zero_sample(fac: &FactorizedCovariance, replicate_id: u64) -> FieldSample {
    FieldSample { replicate_id, values: vec![0.0; fac.n()] }
}

/// Streams `count` replicates starting at `first_id` to `consume`, always in
/// ascending id order. `workers` only sets how many blocks are computed
/// concurrently; the samples and their order are identical for any value.
pub fn sample_batch<F>(
    fac: &FactorizedCovariance,
    seed: u64,
    first_id: u64,
    count: u64,
    workers: usize,
    mut consume: F,
) where
    F: FnMut(u64, &[f64]),
{
    let n = fac.n();
    let block = SAMPLE_BLOCK as u64;
    let mut starts: Vec<u64> = Vec::new();
    let mut s = first_id;
    while s < first_id + count {
        starts.push(s);
        s += block.min(first_id + count - s);
    }
    let range_of = |start: u64| start..(start + block).min(first_id + count);

    if workers <= 1 {
        for &start in &starts {
            let ids = range_of(start);
            let x = compute_block(fac, seed, ids.clone());
            for (j, id) in ids.enumerate() {
                consume(id, &x[j * n..(j + 1) * n]);
            }
        }
        return;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    for window in starts.chunks(workers.max(1) * 2) {
        let blocks: Vec<Vec<f64>> = pool.install(|| {
            window
                .par_iter()
                .map(|&start| compute_block(fac, seed, range_of(start)))
                .collect()
        });
        for (&start, x) in window.iter().zip(&blocks) {
            for (j, id) in range_of(start).enumerate() {
                consume(id, &x[j * n..(j + 1) * n]);
            }
        }
    }
}
