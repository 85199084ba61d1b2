//! Moment estimators, scaling exponents, slope fits, and tail diagnostics.
//!
//! Everything here works in the log domain where overflow is a risk: the
//! `p`-th moment of a mass is accumulated from `exp(p * log_mass - M)` with
//! `M` the running maximum exponent, and the Hill estimator consumes log
//! values directly.

use crate::gmc::{CompensatedSum, MassResult};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scaling exponent `zeta(p) = (2 + gamma^2/2) p - gamma^2 p^2`.
pub fn zeta_bar(gamma: f64, p: f64) -> f64 {
    (2.0 + 0.5 * gamma * gamma) * p - gamma * gamma * p * p
}

/// Moment explosion threshold `p_c = 2 / gamma^2`.
pub fn threshold_pc(gamma: f64) -> f64 {
    2.0 / (gamma * gamma)
}

/// Moments at or above this fraction of `threshold_pc` switch the estimator
/// to median-of-means.
pub const HEAVY_TAIL_FRACTION: f64 = 0.8;

/// Bucket count for the median-of-means estimator.
pub const MOM_BUCKETS: usize = 16;

/// `sqrt(pi / 2)`: asymptotic stderr inflation of a median of normal means.
const MEDIAN_STDERR_FACTOR: f64 = 1.2533141373155003;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("moment order must be finite, got {0}")]
    BadOrder(f64),
    #[error("Hill tail size k={k} needs 20 <= k and 10 k <= n, got n={n}")]
    BadTailSize { k: usize, n: usize },
    #[error("top {0} order statistics are tied; tail index undefined")]
    TiesInTail(usize),
    #[error("coupled series differ in length: {a} vs {b}")]
    SeriesMismatch { a: usize, b: usize },
    #[error("replicate ids diverge at index {index}; cross moments need coupled samples")]
    UncoupledReplicates { index: usize },
}

/// How a moment estimate was aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    Mean,
    MedianOfMeans,
}

/// Monte Carlo estimate of `E[mass^p]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `ln(mean)`, accumulated without leaving the log domain.
    pub log_mean: f64,
    pub n_samples: u64,
    pub method: EstimatorMethod,
}

/// Estimates `E[exp(p * log_mass)]` from replicate masses.
///
/// Uses a plain mean with exponent guarding, except for heavy orders
/// (`p >= HEAVY_TAIL_FRACTION * threshold_pc(gamma)`) where the estimator
/// switches to a median of `MOM_BUCKETS` contiguous bucket means. Bucketing
/// follows replicate order, so the estimate is a pure function of the input
/// sequence.
pub fn estimate_moment(masses: &[MassResult], p: f64) -> Result<MomentEstimate, MomentError> {
    if !p.is_finite() {
        return Err(MomentError::BadOrder(p));
    }
    if masses.len() < 2 {
        return Err(MomentError::TooFewSamples { need: 2, got: masses.len() });
    }
    let gamma = masses[0].gamma;
    let heavy = p >= HEAVY_TAIL_FRACTION * threshold_pc(gamma) && p > 0.0;
    let logs: Vec<f64> = masses.iter().map(|m| p * m.log_mass).collect();
    Ok(estimate_from_logs(&logs, p, heavy))
}

/// Coupled cross moment `E[mass_a^k * mass_b^q]` from per-replicate log
/// masses of two regions sampled under the same field. When the two inputs
/// are the same series the result reduces bitwise to
/// `estimate_moment(a, k + q)`.
pub fn cross_moment(
    a: &[MassResult],
    b: &[MassResult],
    k: f64,
    q: f64,
) -> Result<MomentEstimate, MomentError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(MomentError::BadOrder(k));
    }
    if !(q.is_finite() && q > 0.0) {
        return Err(MomentError::BadOrder(q));
    }
    if a.len() != b.len() {
        return Err(MomentError::SeriesMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 2 {
        return Err(MomentError::TooFewSamples { need: 2, got: a.len() });
    }
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        if ra.replicate_id != rb.replicate_id {
            return Err(MomentError::UncoupledReplicates { index: i });
        }
    }
    if a.iter().zip(b).all(|(ra, rb)| ra.log_mass == rb.log_mass) {
        return estimate_moment(a, k + q);
    }
    let p = k + q;
    let gamma = a[0].gamma;
    let heavy = p >= HEAVY_TAIL_FRACTION * threshold_pc(gamma);
    let logs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| k * ra.log_mass + q * rb.log_mass)
        .collect();
    Ok(estimate_from_logs(&logs, p, heavy))
}

/// Shared estimator core over already-combined log values: each sample
/// contributes `exp(logs[i])`; `p` is only echoed into the result.
fn estimate_from_logs(logs: &[f64], p: f64, heavy: bool) -> MomentEstimate {
    let n = logs.len();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled = |t: f64| (t - shift).exp();

    if heavy && n >= 2 * MOM_BUCKETS {
        let mut bucket_means = [0.0f64; MOM_BUCKETS];
        for (b, mean) in bucket_means.iter_mut().enumerate() {
            let lo = b * n / MOM_BUCKETS;
            let hi = (b + 1) * n / MOM_BUCKETS;
            let mut s = CompensatedSum::new();
            for &t in &logs[lo..hi] {
                s.add(scaled(t));
            }
            *mean = s.value() / (hi - lo) as f64;
        }
        let mut sorted = bucket_means;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (sorted[MOM_BUCKETS / 2 - 1] + sorted[MOM_BUCKETS / 2]);
        let bucket_mean = bucket_means.iter().sum::<f64>() / MOM_BUCKETS as f64;
        let var = bucket_means
            .iter()
            .map(|m| (m - bucket_mean) * (m - bucket_mean))
            .sum::<f64>()
            / (MOM_BUCKETS - 1) as f64;
        let se = MEDIAN_STDERR_FACTOR * (var / MOM_BUCKETS as f64).sqrt();
        return MomentEstimate {
            p,
            mean: shift.exp() * median,
            stderr: shift.exp() * se,
            log_mean: shift + median.ln(),
            n_samples: n as u64,
            method: EstimatorMethod::MedianOfMeans,
        };
    }

    let mut sum = CompensatedSum::new();
    for &t in logs {
        sum.add(scaled(t));
    }
    let mean_scaled = sum.value() / n as f64;
    let mut var_sum = CompensatedSum::new();
    for &t in logs {
        let d = scaled(t) - mean_scaled;
        var_sum.add(d * d);
    }
    let sd_scaled = (var_sum.value() / (n - 1) as f64).sqrt();
    MomentEstimate {
        p,
        mean: shift.exp() * mean_scaled,
        stderr: shift.exp() * sd_scaled / (n as f64).sqrt(),
        log_mean: shift + mean_scaled.ln(),
        n_samples: n as u64,
        method: EstimatorMethod::Mean,
    }
}

/// Hill tail-index estimate with its stability diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    pub alpha: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub k: usize,
    /// Estimates at half and double the tail size; a genuine power tail
    /// keeps them inside the main confidence interval.
    pub alpha_at_half_k: f64,
    pub alpha_at_double_k: f64,
    pub stable: bool,
}

/// Default Hill tail size `n^{2/3}`, clamped to the estimator's domain.
pub fn default_hill_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0) as usize).clamp(20, (n / 10).max(20))
}

fn hill_alpha(sorted_desc: &[f64], k: usize) -> Result<f64, MomentError> {
    let pivot = sorted_desc[k];
    let mut s = CompensatedSum::new();
    for v in &sorted_desc[..k] {
        s.add(v - pivot);
    }
    let mean_excess = s.value() / k as f64;
    if mean_excess <= 0.0 {
        return Err(MomentError::TiesInTail(k + 1));
    }
    Ok(1.0 / mean_excess)
}

/// Hill estimator of the power-tail exponent of `exp(value)`.
///
/// `alpha = (mean of the top-k log excesses over the k-th order statistic)^-1`
/// with the asymptotic CI `alpha (1 +- 1.96 / sqrt(k))`. The returned
/// diagnostic re-estimates at `k/2` and `2k`; drift outside the CI flags a
/// tail that is not a clean power law.
pub fn tail_index(log_values: &[f64], k: usize) -> Result<TailIndexEstimate, MomentError> {
    let n = log_values.len();
    if k < 20 || n < 10 * k {
        return Err(MomentError::BadTailSize { k, n });
    }
    let mut sorted: Vec<f64> = log_values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let alpha = hill_alpha(&sorted, k)?;
    let rel = 1.96 / (k as f64).sqrt();
    let (ci_lo, ci_hi) = (alpha * (1.0 - rel), alpha * (1.0 + rel));
    let alpha_at_half_k = hill_alpha(&sorted, (k / 2).max(20))?;
    let alpha_at_double_k = hill_alpha(&sorted, (2 * k).min(n - 1))?;
    let stable = (ci_lo..=ci_hi).contains(&alpha_at_half_k)
        && (ci_lo..=ci_hi).contains(&alpha_at_double_k);
    Ok(TailIndexEstimate { alpha, ci_lo, ci_hi, k, alpha_at_half_k, alpha_at_double_k, stable })
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based standard error of the slope (zero for exact fits).
    pub slope_se: f64,
}

/// Fits `y = slope * x + intercept` by least squares over `(x, y)` points.
pub fn fit_line(points: &[(f64, f64)]) -> SlopeFit {
    let n = points.len() as f64;
    assert!(points.len() >= 2, "line fit needs at least two points");
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    assert!(sxx > 0.0, "line fit needs distinct abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if points.len() > 2 {
        let ss_res: f64 = points
            .iter()
            .map(|(x, y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum();
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    SlopeFit { slope, intercept, slope_se }
}

/// Least-squares localization of the moment threshold from fitted
/// divergence slopes.
///
/// The divergence slope as a function of `p` is
/// `max(0, gamma^2 (p - 1/2)(p - q))` with `q` the threshold; this scans `q`
/// over the covered `p` range and returns the best fit.
pub fn localize_threshold(gamma: f64, slopes: &[(f64, f64)]) -> f64 {
    assert!(slopes.len() >= 2, "threshold fit needs at least two slopes");
    let g2 = gamma * gamma;
    let lo = slopes.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    // Below the threshold the moment stays bounded, so the model slope is zero
    // there even though g2*(p-1/2)*(p-q) is positive again for p < 1/2.
    let model = |p: f64, q: f64| if p > q { g2 * (p - 0.5) * (p - q) } else { 0.0 };
    let sse = |q: f64| {
        slopes
            .iter()
            .map(|&(p, s)| {
                let d = s - model(p, q);
                d * d
            })
            .sum::<f64>()
    };
    let steps = 4000;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let q = lo + (hi - lo) * i as f64 / steps as f64;
        let e = sse(q);
        if e < best.0 {
            best = (e, q);
        }
    }
    best.1
}
