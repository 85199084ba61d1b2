//! Regularized covariance kernel, uniform grid discretization, and dense
//! Cholesky factorization.
//!
//! The field covariance between points `z, w` in the closed upper half-plane
//! is
//!
//! ```text
//! K(z, w) = -ln(max(|z - w|, eps)) - ln(max(|z - conj(w)|, eps)) + lambda
//! ```
//!
//! The clamp at `eps` regularizes the log singularity; the reflection term
//! `|z - conj(w)|` encodes the boundary. On the diagonal this reduces to
//! `-ln(eps) - ln(max(2 Im z, eps)) + lambda`. The clamp commutes with
//! scaling: `max(r d, r eps) = r max(d, eps)`, so refining `eps -> r eps`
//! while scaling all points by `r` shifts the whole matrix by the constant
//! `-2 ln r`. That exact shift is what the scaling experiments rely on.
//!
//! Assembly over a grid lifts the diagonal by [`SAMPLING_RIDGE`] so the
//! point-sampled matrix is positive definite; the lift cancels in every
//! cross-grid identity above and is reflected in the per-cell variances.

use crate::geometry::UHPRect;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default cap on grid cells; the dense factor for `n` cells needs
/// `8 n^2` bytes, so 16384 cells is a 2 GiB working buffer.
pub const DEFAULT_MAX_CELLS: usize = 16384;

/// Escalating diagonal jitter ladder, as fractions of the max diagonal entry.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Diagonal lift applied when the kernel is assembled over a grid.
///
/// Sampling the kernel at cell centers under-weights the diagonal relative
/// to the cell-averaged (Gram) matrix: the raw assembly has a spectral floor
/// near -0.62 in the mean-zero sector, independent of grid size, which no
/// constant shift `lambda` can raise (a rank-one all-ones update leaves that
/// sector untouched). Lifting every assembled diagonal by this constant
/// restores positive definiteness. The lift enters `cell_sigma2`, so the
/// sampled field is exchanged for one with a bounded extra independent
/// component per cell; first moments and all scaling shifts are unaffected.
pub const SAMPLING_RIDGE: f64 = 1.0;

pub type Point = (f64, f64);

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("point ({0}, {1}) has non-finite coordinates")]
    NonFinitePoint(f64, f64),
    #[error("regularization scale must be finite and positive, got {0}")]
    BadEpsilon(f64),
    #[error("constant shift must be finite, got {0}")]
    BadLambda(f64),
    #[error("cell size {eps} does not divide region sides ({width} x {height}) to 1e-9")]
    MisalignedRegion { eps: f64, width: f64, height: f64 },
    #[error("cell size {eps} exceeds region side {side}")]
    CellLargerThanRegion { eps: f64, side: f64 },
    #[error(
        "grid would have {cells} cells, above the cap of {max_cells}; the dense factor alone needs {gib:.2} GiB"
    )]
    TooManyCells { cells: usize, max_cells: usize, gib: f64 },
    #[error(
        "covariance is not positive definite (min pivot {min_pivot:.3e} at jitter {jitter:.3e}); try a larger constant shift"
    )]
    NotPositiveDefinite { min_pivot: f64, jitter: f64 },
    #[error("no candidate shift produced a positive definite covariance; tried {0:?}")]
    NoShiftWorks(Vec<f64>),
    #[error("factor cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// Kernel parameters: regularization scale and constant shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub epsilon: f64,
    pub lambda: f64,
}

impl CovarianceSpec {
    pub fn new(epsilon: f64, lambda: f64) -> Result<Self, KernelError> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(KernelError::BadEpsilon(epsilon));
        }
        if !lambda.is_finite() {
            return Err(KernelError::BadLambda(lambda));
        }
        Ok(Self { epsilon, lambda })
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, z: Point, w: Point) -> f64 {
        let dx = z.0 - w.0;
        let dy = z.1 - w.1;
        let direct = (dx * dx + dy * dy).sqrt().max(self.epsilon);
        let sy = z.1 + w.1;
        let reflected = (dx * dx + sy * sy).sqrt().max(self.epsilon);
        -(direct.ln() + reflected.ln()) + self.lambda
    }
}

/// Evaluates the regularized kernel at a pair of points.
pub fn kernel_value(z: Point, w: Point, spec: &CovarianceSpec) -> Result<f64, KernelError> {
    for &(x, y) in &[z, w] {
        if !x.is_finite() || !y.is_finite() {
            return Err(KernelError::NonFinitePoint(x, y));
        }
    }
    Ok(spec.value_unchecked(z, w))
}

/// Uniform grid of square cells of side `epsilon` covering a rectangle.
///
/// Cells are indexed row-major from the bottom-left: `index = row * nx + col`,
/// with centers offset half a cell from the edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDiscretization {
    pub region: UHPRect,
    pub epsilon: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridDiscretization {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Point {
        let row = idx / self.nx;
        let col = idx % self.nx;
        (
            self.region.x0 + (col as f64 + 0.5) * self.epsilon,
            self.region.y0 + (row as f64 + 0.5) * self.epsilon,
        )
    }

    /// Bottom edge height of the row holding cell `idx`.
    #[inline]
    pub fn cell_y0(&self, idx: usize) -> f64 {
        let row = idx / self.nx;
        self.region.y0 + row as f64 * self.epsilon
    }

    /// Indices of the cells whose closed cell rectangle lies inside `sub`,
    /// which must be edge-aligned to the grid. Row-major ascending order.
    pub fn cells_in(&self, sub: &UHPRect) -> Result<Vec<usize>, KernelError> {
        let eps = self.epsilon;
        let to_index = |offset: f64| -> Result<usize, KernelError> {
            let ratio = offset / eps;
            let rounded = ratio.round();
            if (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0) || rounded < 0.0 {
                return Err(KernelError::MisalignedRegion {
                    eps,
                    width: sub.width(),
                    height: sub.height(),
                });
            }
            Ok(rounded as usize)
        };
        let c0 = to_index(sub.x0 - self.region.x0)?;
        let c1 = to_index(sub.x1 - self.region.x0)?;
        let r0 = to_index(sub.y0 - self.region.y0)?;
        let r1 = to_index(sub.y1 - self.region.y0)?;
        if c1 > self.nx || r1 > self.ny || c1 <= c0 || r1 <= r0 {
            return Err(KernelError::MisalignedRegion {
                eps,
                width: sub.width(),
                height: sub.height(),
            });
        }
        let mut out = Vec::with_capacity((c1 - c0) * (r1 - r0));
        for row in r0..r1 {
            for col in c0..c1 {
                out.push(row * self.nx + col);
            }
        }
        Ok(out)
    }
}

/// Builds the uniform grid with the default cell cap.
pub fn build_grid(region: &UHPRect, epsilon: f64) -> Result<GridDiscretization, KernelError> {
    build_grid_with_cap(region, epsilon, DEFAULT_MAX_CELLS)
}

/// Builds the uniform grid, rejecting misaligned regions and grids above the
/// cell cap (with the dense-factor memory requirement in the error).
pub fn build_grid_with_cap(
    region: &UHPRect,
    epsilon: f64,
    max_cells: usize,
) -> Result<GridDiscretization, KernelError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(KernelError::BadEpsilon(epsilon));
    }
    let (width, height) = (region.width(), region.height());
    let min_side = width.min(height);
    if epsilon > min_side {
        return Err(KernelError::CellLargerThanRegion { eps: epsilon, side: min_side });
    }
    let count = |side: f64| -> Option<usize> {
        let ratio = side / epsilon;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            None
        } else {
            Some(rounded as usize)
        }
    };
    let (nx, ny) = match (count(width), count(height)) {
        (Some(nx), Some(ny)) if nx > 0 && ny > 0 => (nx, ny),
        _ => return Err(KernelError::MisalignedRegion { eps: epsilon, width, height }),
    };
    let cells = nx * ny;
    if cells > max_cells {
        let gib = (cells as f64) * (cells as f64) * 8.0 / (1024.0 * 1024.0 * 1024.0);
        return Err(KernelError::TooManyCells { cells, max_cells, gib });
    }
    Ok(GridDiscretization { region: *region, epsilon, nx, ny })
}

/// Assembles the dense covariance matrix over the grid centers (row-major,
/// `n x n`), diagonal lifted by [`SAMPLING_RIDGE`]. The buffer is `8 n^2`
/// bytes; intended for factorization input and small-grid verification.
pub fn assemble_covariance(grid: &GridDiscretization, spec: &CovarianceSpec) -> Vec<f64> {
    let n = grid.n_cells();
    let mut a = vec![0.0f64; n * n];
    assemble_into(grid, spec, 0.0, &mut a);
    a
}

fn assemble_into(grid: &GridDiscretization, spec: &CovarianceSpec, jitter: f64, a: &mut [f64]) {
    let n = grid.n_cells();
    let xs: Vec<f64> = (0..n).map(|i| grid.center(i).0).collect();
    let ys: Vec<f64> = (0..n).map(|i| grid.center(i).1).collect();
    for i in 0..n {
        let (xi, yi) = (xs[i], ys[i]);
        a[i * n + i] = spec.value_unchecked((xi, yi), (xi, yi)) + SAMPLING_RIDGE + jitter;
        for j in (i + 1)..n {
            let v = spec.value_unchecked((xi, yi), (xs[j], ys[j]));
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Outcome of an in-place dense Cholesky attempt.
pub(crate) struct CholReport {
    pub min_pivot: f64,
}

/// In-place blocked Cholesky of a symmetric matrix in row-major order.
/// On success the lower triangle holds `L` (upper left untouched garbage);
/// on failure returns the offending pivot value.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<CholReport, f64> {
    const NB: usize = 192;
    debug_assert_eq!(a.len(), n * n);
    let mut min_pivot = f64::INFINITY;
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + NB).min(n);
        // Diagonal block, unblocked left-looking within the panel.
        for j in k0..k1 {
            let (head, tail) = a.split_at_mut(j * n);
            let row_j = &mut tail[..n];
            let mut d = row_j[j];
            for t in k0..j {
                d -= row_j[t] * row_j[t];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(d);
            }
            min_pivot = min_pivot.min(d);
            let ljj = d.sqrt();
            row_j[j] = ljj;
            let _ = head;
            // Column below the diagonal within the block.
            for i in (j + 1)..k1 {
                let (upper, lower) = a.split_at_mut(i * n);
                let row_j = &upper[j * n..j * n + n];
                let row_i = &mut lower[..n];
                let mut s = row_i[j];
                for t in k0..j {
                    s -= row_i[t] * row_j[t];
                }
                row_i[j] = s / ljj;
            }
        }
        // Panel solve: rows k1..n against the factored diagonal block.
        for i in k1..n {
            let (upper, lower) = a.split_at_mut(i * n);
            let row_i = &mut lower[..n];
            for j in k0..k1 {
                let row_j = &upper[j * n..j * n + n];
                let mut s = row_i[j];
                for t in k0..j {
                    s -= row_i[t] * row_j[t];
                }
                row_i[j] = s / row_j[j];
            }
        }
        // Trailing update: A[k1.., k1..] -= P P^T with P = A[k1.., k0..k1].
        if k1 < n {
            let m = n - k1;
            let kdim = k1 - k0;
            unsafe {
                let p = a.as_ptr().add(k1 * n + k0);
                let c = a.as_mut_ptr().add(k1 * n + k1);
                matrixmultiply::dgemm(
                    m,
                    kdim,
                    m,
                    -1.0,
                    p,
                    n as isize,
                    1,
                    p,
                    1,
                    n as isize,
                    1.0,
                    c,
                    n as isize,
                    1,
                );
            }
        }
        k0 = k1;
    }
    Ok(CholReport { min_pivot })
}

/// Dense lower-triangular factor of the covariance over a grid, together
/// with the conditioning record of the factorization.
pub struct FactorizedCovariance {
    pub grid: GridDiscretization,
    pub spec: CovarianceSpec,
    /// Row-major `n x n` matrix; strict upper triangle is zero.
    l: Vec<f64>,
    pub min_pivot: f64,
    /// Absolute diagonal jitter that was added to achieve success.
    pub jitter_used: f64,
}

impl FactorizedCovariance {
    pub fn n(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// Entry `(i, j)` of `L L^T`, for verification.
    pub fn reconstruct_entry(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        let k = i.min(j) + 1;
        let (ri, rj) = (&self.l[i * n..i * n + k], &self.l[j * n..j * n + k]);
        ri.iter().zip(rj).map(|(a, b)| a * b).sum()
    }

    /// Marginal variance of cell `i` as assembled: kernel value plus
    /// [`SAMPLING_RIDGE`] (excludes jitter, which only stabilizes the
    /// factorization).
    pub fn cell_sigma2(&self, i: usize) -> f64 {
        let z = self.grid.center(i);
        self.spec.value_unchecked(z, z) + SAMPLING_RIDGE
    }
}

/// Factorizes the covariance over the grid, escalating diagonal jitter
/// through `JITTER_LADDER` (fractions of the max diagonal) until the
/// factorization succeeds.
pub fn factorize(
    grid: &GridDiscretization,
    spec: &CovarianceSpec,
) -> Result<FactorizedCovariance, KernelError> {
    let n = grid.n_cells();
    let max_diag = (0..n)
        .map(|i| {
            let z = grid.center(i);
            spec.value_unchecked(z, z)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        + SAMPLING_RIDGE;
    let mut a = vec![0.0f64; n * n];
    let mut last_pivot = f64::NAN;
    let mut last_jitter = 0.0;
    for &frac in JITTER_LADDER.iter() {
        let jitter = frac * max_diag.abs();
        assemble_into(grid, spec, jitter, &mut a);
        match cholesky_in_place(&mut a, n) {
            Ok(report) => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        a[i * n + j] = 0.0;
                    }
                }
                return Ok(FactorizedCovariance {
                    grid: *grid,
                    spec: *spec,
                    l: a,
                    min_pivot: report.min_pivot,
                    jitter_used: jitter,
                });
            }
            Err(pivot) => {
                last_pivot = pivot;
                last_jitter = jitter;
            }
        }
    }
    Err(KernelError::NotPositiveDefinite { min_pivot: last_pivot, jitter: last_jitter })
}

/// Report from the shift search: the first constant shift whose covariance
/// factorizes, plus the conditioning of that factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdShiftReport {
    pub lambda: f64,
    pub min_pivot: f64,
    pub jitter_used: f64,
}

/// Tries candidate constant shifts in order and returns the first that
/// yields a positive definite covariance on the grid.
///
/// A constant shift changes `p`-th moments by the exact factor
/// `exp(gamma^2 lambda p (p - 1) / 2)`; see
/// [`crate::inequalities::shift_moment_factor`].
pub fn validate_psd_shift(
    grid: &GridDiscretization,
    epsilon: f64,
    candidates: &[f64],
) -> Result<PsdShiftReport, KernelError> {
    for &lambda in candidates {
        let spec = CovarianceSpec::new(epsilon, lambda)?;
        if let Ok(fac) = factorize(grid, &spec) {
            return Ok(PsdShiftReport {
                lambda,
                min_pivot: fac.min_pivot,
                jitter_used: fac.jitter_used,
            });
        }
    }
    Err(KernelError::NoShiftWorks(candidates.to_vec()))
}

const CACHE_MAGIC: &[u8; 8] = b"GMCLABF1";

/// Cache key: stable hash of the grid geometry and kernel parameters.
fn cache_file_name(grid: &GridDiscretization, spec: &CovarianceSpec) -> String {
    // FNV-1a over the exact bit patterns; stable across processes.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in [
        grid.region.x0,
        grid.region.x1,
        grid.region.y0,
        grid.region.y1,
        grid.epsilon,
        spec.epsilon,
        spec.lambda,
    ] {
        eat(v.to_bits());
    }
    eat(grid.nx as u64);
    eat(grid.ny as u64);
    format!("factor-{h:016x}.bin")
}

fn write_factor(path: &Path, fac: &FactorizedCovariance) -> Result<(), KernelError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        for v in [
            fac.grid.region.x0,
            fac.grid.region.x1,
            fac.grid.region.y0,
            fac.grid.region.y1,
            fac.grid.epsilon,
            fac.spec.epsilon,
            fac.spec.lambda,
            fac.min_pivot,
            fac.jitter_used,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(fac.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(fac.grid.ny as u64).to_le_bytes())?;
        for v in &fac.l {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_factor(
    path: &Path,
    grid: &GridDiscretization,
    spec: &CovarianceSpec,
) -> Result<Option<FactorizedCovariance>, KernelError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(_) => return Ok(None),
    };
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Ok(None);
    }
    let mut f64s = [0.0f64; 9];
    let mut buf = [0u8; 8];
    for v in f64s.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    r.read_exact(&mut buf)?;
    let nx = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let ny = u64::from_le_bytes(buf) as usize;
    let header_matches = f64s[0] == grid.region.x0
        && f64s[1] == grid.region.x1
        && f64s[2] == grid.region.y0
        && f64s[3] == grid.region.y1
        && f64s[4] == grid.epsilon
        && f64s[5] == spec.epsilon
        && f64s[6] == spec.lambda
        && nx == grid.nx
        && ny == grid.ny;
    if !header_matches {
        return Ok(None);
    }
    let n = nx * ny;
    let mut l = vec![0.0f64; n * n];
    let bytes = unsafe {
        std::slice::from_raw_parts_mut(l.as_mut_ptr() as *mut u8, n * n * 8)
    };
    r.read_exact(bytes)?;
    #[cfg(target_endian = "big")]
    for v in l.iter_mut() {
        *v = f64::from_le_bytes(v.to_ne_bytes());
    }
    Ok(Some(FactorizedCovariance {
        grid: *grid,
        spec: *spec,
        l,
        min_pivot: f64s[7],
        jitter_used: f64s[8],
    }))
}

/// Factorizes with an optional on-disk cache keyed by grid and kernel
/// parameters. A corrupt or mismatched cache entry is recomputed.
pub fn factorize_cached(
    grid: &GridDiscretization,
    spec: &CovarianceSpec,
    cache_dir: Option<&Path>,
) -> Result<FactorizedCovariance, KernelError> {
    let path: Option<PathBuf> = cache_dir.map(|d| d.join(cache_file_name(grid, spec)));
    if let Some(p) = &path {
        if let Some(fac) = read_factor(p, grid, spec)? {
            return Ok(fac);
        }
    }
    let fac = factorize(grid, spec)?;
    if let Some(p) = &path {
        std::fs::create_dir_all(p.parent().unwrap_or(Path::new(".")))?;
        write_factor(p, &fac)?;
    }
    Ok(fac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UHPRect;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn kernel_diagonal_matches_the_clamped_log_law() {
        let spec = CovarianceSpec::new(1e-3, 0.0).unwrap();
        let v = kernel_value((0.0, 1.0), (0.0, 1.0), &spec).unwrap();
        let expect = -(1e-3f64).ln() - 2.0f64.ln();
        assert!(close(v, expect, 1e-14), "{v} vs {expect}");
        assert!(close(v, 6.214608098422191, 1e-12));
    }

    #[test]
    fn kernel_off_diagonal_combines_direct_and_reflected_logs() {
        let spec = CovarianceSpec::new(1e-3, 0.0).unwrap();
        let v = kernel_value((0.0, 0.5), (0.3, 0.5), &spec).unwrap();
        let expect = -(0.3f64).ln() - (0.09f64 + 1.0).sqrt().ln();
        assert!(close(v, expect, 1e-14), "{v} vs {expect}");
        assert!(close(v, 1.160883, 1e-5));
    }

    #[test]
    fn kernel_shift_moves_values_uniformly() {
        let base = CovarianceSpec::new(0.01, 0.0).unwrap();
        let shifted = CovarianceSpec::new(0.01, 1.75).unwrap();
        let z = (0.2, 0.3);
        let w = (-0.4, 0.9);
        let a = kernel_value(z, w, &base).unwrap();
        let b = kernel_value(z, w, &shifted).unwrap();
        assert!(close(b - a, 1.75, 1e-14));
    }

    #[test]
    fn kernel_rejects_bad_inputs() {
        assert!(CovarianceSpec::new(0.0, 0.0).is_err());
        assert!(CovarianceSpec::new(0.1, f64::NAN).is_err());
        let spec = CovarianceSpec::new(0.1, 0.0).unwrap();
        assert!(kernel_value((f64::NAN, 0.0), (0.0, 0.0), &spec).is_err());
    }

    /// Scaling the configuration by `r` while refining `eps -> r eps`
    /// shifts every kernel value by exactly `-2 ln r`.
    #[test]
    fn kernel_scaling_shift_is_exact() {
        let spec = CovarianceSpec::new(1.0 / 64.0, 0.25).unwrap();
        let r = 0.5;
        let fine = CovarianceSpec::new(r / 64.0, 0.25).unwrap();
        let pairs = [
            (((0.1, 0.2)), ((0.1, 0.2))),
            (((0.1, 0.01)), ((0.5, 0.3))),
            (((-0.7, 0.9)), ((0.69, 0.0078125))),
        ];
        for (z, w) in pairs {
            let base = kernel_value(z, w, &spec).unwrap();
            let scaled =
                kernel_value((r * z.0, r * z.1), (r * w.0, r * w.1), &fine).unwrap();
            assert!(
                close(scaled - base, -2.0 * r.ln(), 1e-12),
                "shift {} vs {}",
                scaled - base,
                -2.0 * r.ln()
            );
        }
    }

    /// Refining `eps` alone changes diagonals by exactly `ln(eps_c / eps_f)`
    /// and leaves entries for pairs at distance >= eps_c untouched.
    #[test]
    fn refinement_changes_only_the_clamped_logs() {
        let coarse = CovarianceSpec::new(1.0 / 16.0, 0.0).unwrap();
        let fine = CovarianceSpec::new(1.0 / 64.0, 0.0).unwrap();
        let z = (0.3, 0.5);
        let dc = kernel_value(z, z, &coarse).unwrap();
        let df = kernel_value(z, z, &fine).unwrap();
        assert!(close(df - dc, (4.0f64).ln(), 1e-13));
        let w = (0.3 + 0.25, 0.5);
        let oc = kernel_value(z, w, &coarse).unwrap();
        let of = kernel_value(z, w, &fine).unwrap();
        assert_eq!(oc, of);
    }

    #[test]
    fn grid_dimensions_and_centers() {
        let region = UHPRect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let grid = build_grid(&region, 0.25).unwrap();
        assert_eq!((grid.nx, grid.ny), (4, 4));
        assert_eq!(grid.n_cells(), 16);
        assert_eq!(grid.center(0), (0.125, 0.125));
        assert_eq!(grid.center(5), (0.375, 0.375));

        let wide = UHPRect::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        let grid = build_grid(&wide, 0.125).unwrap();
        assert_eq!((grid.nx, grid.ny), (16, 8));
        assert_eq!(grid.n_cells(), 128);
    }

    #[test]
    fn grid_rejects_oversized_misaligned_and_huge() {
        let region = UHPRect::new(0.0, 1.0, 0.0, 0.1).unwrap();
        assert!(matches!(
            build_grid(&region, 0.25),
            Err(KernelError::CellLargerThanRegion { .. })
        ));
        let skew = UHPRect::new(0.0, 1.03, 0.0, 1.0).unwrap();
        assert!(matches!(
            build_grid(&skew, 0.125),
            Err(KernelError::MisalignedRegion { .. })
        ));
        let unit = UHPRect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        match build_grid_with_cap(&unit, 1.0 / 256.0, 16384) {
            Err(KernelError::TooManyCells { cells, gib, .. }) => {
                assert_eq!(cells, 65536);
                assert!(gib > 30.0);
            }
            other => panic!("expected cap error, got {:?}", other.map(|g| g.n_cells())),
        }
    }

    #[test]
    fn cells_in_selects_aligned_subregions() {
        let region = UHPRect::new(-0.5, 0.5, 0.0, 0.5).unwrap();
        let grid = build_grid(&region, 0.25).unwrap();
        let left = UHPRect::new(-0.5, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(grid.cells_in(&left).unwrap(), vec![0, 1, 4, 5]);
        let whole = grid.cells_in(&region).unwrap();
        assert_eq!(whole.len(), 8);
        let skew = UHPRect::new(-0.4, 0.0, 0.0, 0.5).unwrap();
        assert!(grid.cells_in(&skew).is_err());
    }

    #[test]
    fn cholesky_two_by_two_matches_the_closed_form() {
        let (s1, k12, s2) = (4.0, 1.0, 2.25);
        let mut a = vec![s1, k12, k12, s2];
        let rep = cholesky_in_place(&mut a, 2).unwrap();
        let l11 = s1.sqrt();
        let l21 = k12 / l11;
        let l22 = (s2 - l21 * l21).sqrt();
        assert!(close(a[0], l11, 1e-15));
        assert!(close(a[2], l21, 1e-15));
        assert!(close(a[3], l22, 1e-15));
        assert!(close(rep.min_pivot, s2 - l21 * l21, 1e-15));
    }

    #[test]
    fn cholesky_blocked_matches_reconstruction_on_a_big_random_spd_matrix() {
        // Build A = L0 L0^T from a fixed pseudo-random lower factor with a
        // strong diagonal, factor it, and verify the reconstruction. The
        // size exceeds the block width to exercise panel and GEMM paths.
        let n = 300;
        let mut state = 0x243F6A8885A308D3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut l0 = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                l0[i * n + j] = if i == j { 1.5 + next().abs() } else { 0.3 * next() };
            }
        }
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += l0[i * n + k] * l0[j * n + k];
                }
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        let orig = a.clone();
        let rep = cholesky_in_place(&mut a, n).unwrap();
        assert!(rep.min_pivot > 1.0);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += a[i * n + k] * a[j * n + k];
                }
                worst = worst.max((s - orig[i * n + j]).abs());
            }
        }
        assert!(worst < 1e-9, "max reconstruction error {worst}");
    }

    #[test]
    fn cholesky_rejects_indefinite_matrices() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        match cholesky_in_place(&mut a, 2) {
            Err(pivot) => assert!(pivot <= 0.0),
            Ok(_) => panic!("indefinite matrix factored"),
        }
    }

    #[test]
    fn factorize_single_cell_gives_the_marginal_sigma() {
        let region = UHPRect::new(0.0, 0.5, 0.0, 0.5).unwrap();
        let grid = build_grid(&region, 0.5).unwrap();
        let spec = CovarianceSpec::new(0.5, 0.0).unwrap();
        let fac = factorize(&grid, &spec).unwrap();
        assert_eq!(fac.n(), 1);
        let sigma2 = -(0.5f64).ln() - (0.5f64).ln() + SAMPLING_RIDGE;
        assert!(close(fac.factor()[0], sigma2.sqrt(), 1e-14));
        assert!(close(fac.cell_sigma2(0), sigma2, 1e-15));
        assert_eq!(fac.jitter_used, 0.0);
    }

    #[test]
    fn assembly_lifts_only_the_diagonal() {
        let region = UHPRect::new(-0.2, 0.2, 0.0, 0.4).unwrap();
        let grid = build_grid(&region, 0.05).unwrap();
        let spec = CovarianceSpec::new(0.05, 0.25).unwrap();
        let n = grid.n_cells();
        let a = assemble_covariance(&grid, &spec);
        for i in 0..n {
            for j in 0..n {
                let exact = kernel_value(grid.center(i), grid.center(j), &spec).unwrap();
                let want = if i == j { exact + SAMPLING_RIDGE } else { exact };
                assert_eq!(a[i * n + j], want, "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn raw_point_sampled_kernel_is_indefinite_without_the_ridge() {
        // The spectral floor of the unlifted assembly sits near -0.6 on this
        // grid, far beyond the jitter ladder; the ridge is what makes
        // factorization possible at all.
        let region = UHPRect::new(-0.2, 0.2, 0.0, 0.4).unwrap();
        let grid = build_grid(&region, 0.05).unwrap();
        let spec = CovarianceSpec::new(0.05, 0.0).unwrap();
        let n = grid.n_cells();
        let mut a = assemble_covariance(&grid, &spec);
        for i in 0..n {
            a[i * n + i] -= SAMPLING_RIDGE;
        }
        match cholesky_in_place(&mut a, n) {
            Err(pivot) => assert!(pivot < -0.1, "expected a clearly negative pivot, got {pivot}"),
            Ok(_) => panic!("unlifted point-sampled kernel factored unexpectedly"),
        }
    }

    #[test]
    fn factorize_reproduces_the_covariance_on_a_small_grid() {
        let region = UHPRect::new(-0.2, 0.2, 0.0, 0.4).unwrap();
        let grid = build_grid(&region, 0.05).unwrap();
        assert_eq!(grid.n_cells(), 64);
        let spec = CovarianceSpec::new(0.05, 0.0).unwrap();
        let fac = factorize(&grid, &spec).unwrap();
        assert_eq!(fac.jitter_used, 0.0, "small near-boundary grid should be PD");
        let k = assemble_covariance(&grid, &spec);
        let n = grid.n_cells();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((fac.reconstruct_entry(i, j) - k[i * n + j]).abs());
            }
        }
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-10 * scale, "reconstruction error {worst}");
        // Strict upper triangle of the stored factor is zeroed.
        assert_eq!(fac.factor()[0 * n + 1], 0.0);
    }

    #[test]
    fn validate_psd_shift_returns_zero_for_a_small_domain() {
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let grid = build_grid(&region, 1.0 / 32.0).unwrap();
        let report = validate_psd_shift(&grid, 1.0 / 32.0, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(report.lambda, 0.0);
        assert_eq!(report.jitter_used, 0.0);
        assert!(report.min_pivot > 0.0);
    }

    #[test]
    #[ignore = "factorizes the full-size experiment grids; ~2 min"]
    fn experiment_grids_factorize_with_their_shifts() {
        // The grids the shipped experiments run on, at full size, with the
        // shifts they use. Wide (width-2) regions need lambda > 0: the
        // point-sampled log kernel picks up a negative eigenvalue with a
        // large mean component there, which the all-ones shift absorbs.
        let cases: [(&str, UHPRect, f64, f64); 5] = [
            ("scaling A", UHPRect::new(-1.0, 1.0, 0.0, 1.0).unwrap(), 1.0 / 64.0, 2.0),
            ("scaling rA", UHPRect::new(-0.5, 0.5, 0.0, 0.5).unwrap(), 1.0 / 128.0, 2.0),
            ("divergence scan finest", UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap(), 1.0 / 512.0, 0.0),
            ("cross-moment", UHPRect::new(-0.5, 0.5, 0.0, 0.5).unwrap(), 1.0 / 64.0, 0.0),
            ("slice stack", UHPRect::new(-0.5, 0.5, 1.0 / 128.0, 0.5).unwrap(), 1.0 / 128.0, 0.0),
        ];
        for (name, region, eps, lambda) in cases {
            let grid = build_grid(&region, eps).unwrap();
            let spec = CovarianceSpec::new(eps, lambda).unwrap();
            let fac = factorize(&grid, &spec).unwrap_or_else(|e| panic!("{name}: {e}"));
            println!(
                "{name}: n={} lambda={lambda} min_pivot={:.4} jitter={:.1e}",
                fac.n(),
                fac.min_pivot,
                fac.jitter_used
            );
            assert_eq!(fac.jitter_used, 0.0, "{name} needed jitter");
        }
    }

    #[test]
    fn factor_cache_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let region = UHPRect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let grid = build_grid(&region, 1.0 / 16.0).unwrap();
        let spec = CovarianceSpec::new(1.0 / 16.0, 0.5).unwrap();
        let first = factorize_cached(&grid, &spec, Some(dir.path())).unwrap();
        let second = factorize_cached(&grid, &spec, Some(dir.path())).unwrap();
        assert_eq!(first.factor(), second.factor());
        assert_eq!(first.min_pivot, second.min_pivot);
        assert_eq!(first.jitter_used, second.jitter_used);
        // A different lambda must not hit the same entry.
        let other = CovarianceSpec::new(1.0 / 16.0, 0.75).unwrap();
        let third = factorize_cached(&grid, &other, Some(dir.path())).unwrap();
        assert_ne!(first.factor()[0], third.factor()[0]);
    }
}
