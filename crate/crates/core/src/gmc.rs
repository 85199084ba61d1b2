//! Renormalized exponential masses of the sampled field, in the log domain.
//!
//! The mass of a region `A` under a field replicate `X` is
//!
//! ```text
//! mass(A) = sum_{cells i in A} w_i exp(gamma X_i - gamma^2 Var(X_i) / 2)
//! ```
//!
//! where the cell weight carries the boundary density,
//! `w_i = dx * integral over the cell rows of y^(-gamma^2/2) dy`, evaluated
//! in closed form. The variance compensator uses the variance the sampler
//! actually imposes (kernel diagonal plus factorization jitter), so the mass
//! has expectation exactly `sum w_i`. All accumulation happens in the log
//! domain with compensated summation in a fixed cell order, which keeps
//! masses reproducible and additive to near machine precision.

use crate::geometry::UHPRect;
use crate::kernel::FactorizedCovariance;
use crate::sampler::FieldSample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GmcError {
    #[error("gamma must lie in (0, 2), got {0}")]
    BadGamma(f64),
    #[error("cell weight diverges: intensity gamma^2/2 >= 1 needs a positive lower edge, got y0 = {0}")]
    DivergentWeight(f64),
    #[error("cell edges must satisfy 0 <= y0 < y1, got [{0}, {1}]")]
    BadCellEdges(f64, f64),
    #[error("sample has {got} values but the grid has {want} cells")]
    SampleShapeMismatch { got: usize, want: usize },
    #[error("region selects no cells with positive weight")]
    EmptyRegion,
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
}

/// Chaos parameters. The lab covers the subcritical range `0 < gamma < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmcParams {
    pub gamma: f64,
}

impl GmcParams {
    pub fn new(gamma: f64) -> Result<Self, GmcError> {
        if !gamma.is_finite() || gamma <= 0.0 || gamma >= 2.0 {
            return Err(GmcError::BadGamma(gamma));
        }
        Ok(Self { gamma })
    }

    /// Boundary density exponent `gamma^2 / 2`.
    pub fn intensity(&self) -> f64 {
        0.5 * self.gamma * self.gamma
    }

    /// Whether the boundary weight integral diverges at the axis
    /// (`gamma >= sqrt(2)`), requiring the epsilon floor.
    pub fn needs_floor(&self) -> bool {
        self.gamma * self.gamma >= 2.0
    }
}

/// Log mass of one region under one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassResult {
    pub replicate_id: u64,
    pub gamma: f64,
    pub log_mass: f64,
}

impl MassResult {
    pub fn mass(&self) -> f64 {
        self.log_mass.exp()
    }
}

/// Closed-form boundary weight of one cell column slice
/// `dx * (y1^(1-a) - y0^(1-a)) / (1-a)` with `a = gamma^2/2`, switching to
/// the logarithmic branch `dx * ln(y1/y0)` when `a` is within 1e-12 of 1.
pub(crate) fn column_weight(dx: f64, y0: f64, y1: f64, a: f64) -> Result<f64, GmcError> {
    if !(y0 >= 0.0 && y1 > y0) {
        return Err(GmcError::BadCellEdges(y0, y1));
    }
    let one_minus_a = 1.0 - a;
    if one_minus_a.abs() <= 1e-12 {
        if y0 == 0.0 {
            return Err(GmcError::DivergentWeight(y0));
        }
        return Ok(dx * (y1 / y0).ln());
    }
    if y0 == 0.0 && one_minus_a < 0.0 {
        return Err(GmcError::DivergentWeight(y0));
    }
    let upper = y1.powf(one_minus_a);
    let lower = if y0 == 0.0 { 0.0 } else { y0.powf(one_minus_a) };
    Ok(dx * (upper - lower) / one_minus_a)
}

/// Boundary weight `integral over the cell of y^(-gamma^2/2) dx dy` of a
/// rectangular cell.
pub fn cell_weight(cell: &UHPRect, params: &GmcParams) -> Result<f64, GmcError> {
    column_weight(cell.width(), cell.y0, cell.y1, params.intensity())
}

/// Neumaier compensated sum with a fixed iteration order.
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-cell log weights and compensator terms of a region inside a grid:
/// everything about the mass that does not depend on the replicate.
struct MassLayout {
    cells: Vec<usize>,
    /// `ln w_i - gamma^2 Var(X_i) / 2` per retained cell.
    log_terms: Vec<f64>,
}

fn mass_layout(
    fac: &FactorizedCovariance,
    region: &UHPRect,
    params: &GmcParams,
) -> Result<MassLayout, GmcError> {
    let grid = &fac.grid;
    let a = params.intensity();
    let g2 = params.gamma * params.gamma;
    let eps = grid.epsilon;
    let all = grid.cells_in(region)?;
    let mut cells = Vec::with_capacity(all.len());
    let mut log_terms = Vec::with_capacity(all.len());
    for idx in all {
        let y0 = grid.cell_y0(idx);
        let y1 = y0 + eps;
        let lo = if params.needs_floor() { y0.max(eps) } else { y0 };
        if lo >= y1 {
            continue;
        }
        let w = column_weight(eps, lo, y1, a)?;
        let var = fac.cell_sigma2(idx) + fac.jitter_used;
        cells.push(idx);
        log_terms.push(w.ln() - 0.5 * g2 * var);
    }
    if cells.is_empty() {
        return Err(GmcError::EmptyRegion);
    }
    Ok(MassLayout { cells, log_terms })
}

fn log_sum_exp_terms(layout: &MassLayout, gamma: f64, values: &[f64]) -> f64 {
    let mut max_term = f64::NEG_INFINITY;
    for (&idx, &base) in layout.cells.iter().zip(&layout.log_terms) {
        let t = base + gamma * values[idx];
        if t > max_term {
            max_term = t;
        }
    }
    let mut acc = CompensatedSum::new();
    for (&idx, &base) in layout.cells.iter().zip(&layout.log_terms) {
        acc.add((base + gamma * values[idx] - max_term).exp());
    }
    max_term + acc.value().ln()
}

/// Log mass of `region` under one field replicate.
pub fn gmc_log_mass(
    fac: &FactorizedCovariance,
    sample: &FieldSample,
    region: &UHPRect,
    params: &GmcParams,
) -> Result<MassResult, GmcError> {
    if sample.values.len() != fac.n() {
        return Err(GmcError::SampleShapeMismatch { got: sample.values.len(), want: fac.n() });
    }
    let layout = mass_layout(fac, region, params)?;
    Ok(MassResult {
        replicate_id: sample.replicate_id,
        gamma: params.gamma,
        log_mass: log_sum_exp_terms(&layout, params.gamma, &sample.values),
    })
}

/// Coupled log masses of several regions under the same replicate. Results
/// are bitwise identical to calling [`gmc_log_mass`] per region.
pub fn gmc_masses_multi(
    fac: &FactorizedCovariance,
    sample: &FieldSample,
    regions: &[UHPRect],
    params: &GmcParams,
) -> Result<Vec<MassResult>, GmcError> {
    regions.iter().map(|r| gmc_log_mass(fac, sample, r, params)).collect()
}

/// Reusable mass evaluator for streaming many replicates over fixed regions.
pub struct MassEvaluator {
    gamma: f64,
    layouts: Vec<MassLayout>,
    n_cells: usize,
}

impl MassEvaluator {
    pub fn new(
        fac: &FactorizedCovariance,
        regions: &[&UHPRect],
        params: &GmcParams,
    ) -> Result<Self, GmcError> {
        let layouts = regions
            .iter()
            .map(|r| mass_layout(fac, r, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { gamma: params.gamma, layouts, n_cells: fac.n() })
    }

    /// Log masses of every region for one replicate's values.
    pub fn log_masses(&self, replicate_id: u64, values: &[f64], out: &mut Vec<MassResult>) {
        debug_assert_eq!(values.len(), self.n_cells);
        out.clear();
        for layout in &self.layouts {
            out.push(MassResult {
                replicate_id,
                gamma: self.gamma,
                log_mass: log_sum_exp_terms(layout, self.gamma, values),
            });
        }
    }
}

/// Expected mass of `region` on the `epsilon`-grid: the exact weight sum
/// `sum_i w_i`, evaluated row by row in closed form. Needs no factorization,
/// so it has no cell-count cap.
pub fn deterministic_mass(
    region: &UHPRect,
    epsilon: f64,
    params: &GmcParams,
) -> Result<f64, GmcError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(crate::kernel::KernelError::BadEpsilon(epsilon).into());
    }
    let rows = (region.height() / epsilon).round();
    let cols = (region.width() / epsilon).round();
    if (region.height() / epsilon - rows).abs() > 1e-9 * rows.max(1.0)
        || (region.width() / epsilon - cols).abs() > 1e-9 * cols.max(1.0)
        || rows < 1.0
        || cols < 1.0
    {
        return Err(crate::kernel::KernelError::MisalignedRegion {
            eps: epsilon,
            width: region.width(),
            height: region.height(),
        }
        .into());
    }
    let a = params.intensity();
    let width = region.width();
    let mut acc = CompensatedSum::new();
    let mut any = false;
    for r in 0..rows as usize {
        let y0 = region.y0 + r as f64 * epsilon;
        let y1 = y0 + epsilon;
        let lo = if params.needs_floor() { y0.max(epsilon) } else { y0 };
        if lo >= y1 {
            continue;
        }
        acc.add(column_weight(width, lo, y1, a)?);
        any = true;
    }
    if !any {
        return Err(GmcError::EmptyRegion);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{whitney_split, CarlesonCube, UHPRect};
    use crate::kernel::{build_grid, factorize, CovarianceSpec};
    use crate::sampler::{sample_batch, sample_field};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn gamma_range_is_enforced() {
        assert!(GmcParams::new(0.0).is_err());
        assert!(GmcParams::new(2.0).is_err());
        assert!(GmcParams::new(f64::NAN).is_err());
        assert!(GmcParams::new(1.99).is_ok());
        assert!(!GmcParams::new(1.0).unwrap().needs_floor());
        assert!(GmcParams::new(2.0f64.sqrt()).unwrap().needs_floor());
        assert!(GmcParams::new(1.8).unwrap().needs_floor());
    }

    #[test]
    fn cell_weight_closed_forms() {
        let unit = UHPRect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let w = cell_weight(&unit, &GmcParams::new(1.0).unwrap()).unwrap();
        assert!(close(w, 2.0, 1e-14));

        let upper = UHPRect::new(0.0, 1.0, 0.5, 1.0).unwrap();
        let w = cell_weight(&upper, &GmcParams::new(2.0f64.sqrt()).unwrap()).unwrap();
        assert!(close(w, 2.0f64.ln(), 1e-12));

        // Vanishing intensity: the weight degenerates to the area.
        let w = cell_weight(&unit, &GmcParams::new(1e-6).unwrap()).unwrap();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cell_weight_rejects_divergent_integrals() {
        let unit = UHPRect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let sqrt2 = GmcParams::new(2.0f64.sqrt()).unwrap();
        assert!(matches!(cell_weight(&unit, &sqrt2), Err(GmcError::DivergentWeight(_))));
        let heavy = GmcParams::new(1.8).unwrap();
        assert!(matches!(cell_weight(&unit, &heavy), Err(GmcError::DivergentWeight(_))));
        let lifted = UHPRect::new(0.0, 1.0, 0.25, 1.0).unwrap();
        assert!(cell_weight(&lifted, &heavy).unwrap().is_finite());
    }

    #[test]
    fn deterministic_mass_is_exact_and_grid_independent_for_light_gamma() {
        let region = UHPRect::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        let params = GmcParams::new(1.0).unwrap();
        for eps in [0.25, 0.125, 1.0 / 64.0, 1.0 / 1024.0] {
            let m = deterministic_mass(&region, eps, &params).unwrap();
            assert!(close(m, 4.0, 1e-12), "eps {eps}: {m}");
        }
        // Full Carleson cube for the same gamma: width 2, height 2.
        let cube = CarlesonCube::new(-1.0, 1.0).unwrap().rect();
        let m = deterministic_mass(&cube, 0.125, &params).unwrap();
        assert!(close(m, 4.0 * 2.0f64.sqrt(), 1e-12));
    }

    #[test]
    fn deterministic_mass_applies_the_floor_for_heavy_gamma() {
        let region = UHPRect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let params = GmcParams::new(1.8).unwrap();
        let eps = 1.0 / 32.0;
        let m = deterministic_mass(&region, eps, &params).unwrap();
        let a = params.intensity();
        let expect = (1.0f64.powf(1.0 - a) - eps.powf(1.0 - a)) / (1.0 - a);
        assert!(close(m, expect, 1e-10), "{m} vs {expect}");
        // Halving eps adds exactly the bottom slice integral, and the
        // increments grow by the factor 2^(a-1) per halving.
        let m2 = deterministic_mass(&region, eps / 2.0, &params).unwrap();
        let m3 = deterministic_mass(&region, eps / 4.0, &params).unwrap();
        let slice = (eps.powf(1.0 - a) - (eps / 2.0).powf(1.0 - a)) / (1.0 - a);
        assert!(close(m2 - m, slice, 1e-10), "{} vs {slice}", m2 - m);
        assert!(close((m3 - m2) / (m2 - m), 2.0f64.powf(a - 1.0), 1e-9));
    }

    #[test]
    fn slice_first_moments_follow_the_dyadic_law_at_sqrt2() {
        // At gamma = sqrt(2) each horizontal dyadic slice of Q_[-1,1] has
        // expected mass exactly 2 ln 2, independent of the level.
        let params = GmcParams::new(2.0f64.sqrt()).unwrap();
        for n in 0..5 {
            let hi = 0.5f64.powi(n);
            let slice = UHPRect::new(-1.0, 1.0, 0.5 * hi, hi).unwrap();
            let m = deterministic_mass(&slice, hi / 16.0, &params).unwrap();
            assert!(close(m, 2.0 * 2.0f64.ln(), 1e-12), "level {n}: {m}");
        }
    }

    fn test_factor(region: &UHPRect, eps: f64) -> crate::kernel::FactorizedCovariance {
        let grid = build_grid(region, eps).unwrap();
        let spec = CovarianceSpec::new(eps, 0.0).unwrap();
        factorize(&grid, &spec).unwrap()
    }

    #[test]
    fn mass_is_additive_over_the_whitney_split() {
        let cube = CarlesonCube::new(-0.5, 0.5).unwrap();
        let region = cube.rect();
        let eps = 1.0 / 16.0;
        let fac = test_factor(&region, eps);
        let params = GmcParams::new(1.0).unwrap();
        let split = whitney_split(&cube);
        let parts = [split.left.rect(), split.right.rect(), split.top];
        for rep in [0u64, 5, 17] {
            let s = sample_field(&fac, 99, rep);
            let whole = gmc_log_mass(&fac, &s, &region, &params).unwrap().mass();
            let mut sum = CompensatedSum::new();
            for part in &parts {
                sum.add(gmc_log_mass(&fac, &s, part, &params).unwrap().mass());
            }
            assert!(
                (whole - sum.value()).abs() <= 1e-12 * whole,
                "replicate {rep}: {whole} vs {}",
                sum.value()
            );
            // Monotonicity: each part is at most the whole.
            for part in &parts {
                assert!(gmc_log_mass(&fac, &s, part, &params).unwrap().mass() <= whole);
            }
        }
    }

    #[test]
    fn multi_region_masses_match_single_calls_bitwise() {
        let region = UHPRect::new(0.0, 0.5, 0.0, 0.25).unwrap();
        let fac = test_factor(&region, 1.0 / 16.0);
        let params = GmcParams::new(1.2).unwrap();
        let left = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let right = UHPRect::new(0.25, 0.5, 0.0, 0.25).unwrap();
        let s = sample_field(&fac, 3, 8);
        let multi = gmc_masses_multi(&fac, &s, &[left, right], &params).unwrap();
        assert_eq!(multi[0], gmc_log_mass(&fac, &s, &left, &params).unwrap());
        assert_eq!(multi[1], gmc_log_mass(&fac, &s, &right, &params).unwrap());
        // The evaluator takes the same path.
        let eval = MassEvaluator::new(&fac, &[&left, &right], &params).unwrap();
        let mut out = Vec::new();
        eval.log_masses(s.replicate_id, &s.values, &mut out);
        assert_eq!(out, multi);
    }

    #[test]
    fn sampled_mass_mean_matches_the_deterministic_mass() {
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.125).unwrap();
        let eps = 1.0 / 32.0;
        let fac = test_factor(&region, eps);
        let params = GmcParams::new(1.0).unwrap();
        let expect = deterministic_mass(&region, eps, &params).unwrap();
        let eval = MassEvaluator::new(&fac, &[&region], &params).unwrap();
        let reps = 20_000u64;
        let mut sum = CompensatedSum::new();
        let mut sq = CompensatedSum::new();
        let mut out = Vec::new();
        sample_batch(&fac, 2024, 0, reps, 1, |id, values| {
            eval.log_masses(id, values, &mut out);
            let m = out[0].mass();
            sum.add(m);
            sq.add(m * m);
        });
        let mean = sum.value() / reps as f64;
        let var = (sq.value() / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 5.0 * se,
            "mean {mean}, expected {expect}, se {se}"
        );
    }

    #[test]
    fn sampled_second_moment_matches_the_pair_sum() {
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.125).unwrap();
        let eps = 1.0 / 32.0;
        let grid = build_grid(&region, eps).unwrap();
        let spec = CovarianceSpec::new(eps, 0.0).unwrap();
        // The assembled matrix carries the sampling ridge on its diagonal,
        // which is exactly the variance the mass normalization divides out.
        let cov = crate::kernel::assemble_covariance(&grid, &spec);
        let fac = factorize(&grid, &spec).unwrap();
        let params = GmcParams::new(1.0).unwrap();
        let n = grid.n_cells();
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let col = (i % grid.nx) as f64;
                let row = (i / grid.nx) as f64;
                let cell = UHPRect::new(
                    region.x0 + col * eps,
                    region.x0 + (col + 1.0) * eps,
                    region.y0 + row * eps,
                    region.y0 + (row + 1.0) * eps,
                )
                .unwrap();
                cell_weight(&cell, &params).unwrap()
            })
            .collect();
        let g2 = params.gamma * params.gamma;
        let mut pair_sum = CompensatedSum::new();
        for i in 0..n {
            for j in 0..n {
                pair_sum.add(weights[i] * weights[j] * (g2 * cov[i * n + j]).exp());
            }
        }
        let exact = pair_sum.value();
        let eval = MassEvaluator::new(&fac, &[&region], &params).unwrap();
        let reps = 20_000u64;
        let mut sum = CompensatedSum::new();
        let mut sq = CompensatedSum::new();
        let mut out = Vec::new();
        sample_batch(&fac, 4242, 0, reps, 1, |id, values| {
            eval.log_masses(id, values, &mut out);
            let m2 = out[0].mass() * out[0].mass();
            sum.add(m2);
            sq.add(m2 * m2);
        });
        let mean = sum.value() / reps as f64;
        let var = (sq.value() / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 5.0 * se,
            "second moment {mean} vs pair sum {exact} (se {se})"
        );
    }

    #[test]
    fn heavy_gamma_mass_skips_the_floor_cells() {
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let eps = 1.0 / 16.0;
        let fac = test_factor(&region, eps);
        let params = GmcParams::new(1.8).unwrap();
        let s = sample_field(&fac, 7, 0);
        let m = gmc_log_mass(&fac, &s, &region, &params).unwrap();
        assert!(m.log_mass.is_finite());
        // The same region lifted off the axis by one row has the same mass
        // as the floored full region under the zero field, because the
        // bottom row carries zero weight.
        let lifted = UHPRect::new(0.0, 0.25, eps, 0.25).unwrap();
        let z = crate::sampler::zero_sample(&fac, 0);
        let full = gmc_log_mass(&fac, &z, &region, &params).unwrap();
        let high = gmc_log_mass(&fac, &z, &lifted, &params).unwrap();
        assert_eq!(full.log_mass, high.log_mass);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let fac = test_factor(&region, 1.0 / 16.0);
        let params = GmcParams::new(1.0).unwrap();
        let bad = FieldSample { replicate_id: 0, values: vec![0.0; 3] };
        assert!(matches!(
            gmc_log_mass(&fac, &bad, &region, &params),
            Err(GmcError::SampleShapeMismatch { .. })
        ));
    }
}
