//! Exact verifiers for the elementary two-variable inequalities and numeric
//! verifiers for Gaussian comparison inequalities on small vectors.
//!
//! The elementary checks (`check_muirhead`, `check_converse_super`,
//! `check_converse_sub`) are direct arithmetic with a relative slack floor.
//! The Gaussian checks (`slepian_verify`, `kahane_verify`) first verify the
//! covariance-domination preconditions entrywise, then evaluate both sides
//! by closed form where one exists, tensor Gauss-Hermite quadrature up to
//! dimension 3, or Sobol quasi-Monte Carlo up to dimension 6. Functionals
//! are drawn from a whitelist with known mixed-derivative signs; arbitrary
//! closures cannot be checked for the lemmas' hypotheses.

use crate::gmc::CompensatedSum;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// Exact moment distortion of a constant covariance shift `R`:
/// `exp(gamma^2 R p (p - 1) / 2)`.
pub fn shift_moment_factor(gamma: f64, p: f64, r_shift: f64) -> f64 {
    (0.5 * gamma * gamma * r_shift * p * (p - 1.0)).exp()
}

/// Relative slack floor for the exact elementary checks.
pub const ELEMENTARY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IneqError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("exponent {0} is in (0, 1): the power functional is concave there and the comparison direction reverses; rejected rather than silently flipped")]
    ConcaveExponent(f64),
    #[error("covariance domination fails at entry ({i}, {j}): {lo} > {hi}")]
    DominationFails { i: usize, j: usize, lo: f64, hi: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {0}")]
    NotPsd(f64),
    #[error("dimension {0} exceeds the supported maximum 6")]
    TooLarge(usize),
    #[error("functional requires {0}")]
    BadFunctional(String),
}

/// How a comparison was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMethod {
    ClosedForm,
    Quadrature,
    QuasiMc,
}

/// Outcome of one inequality check, normalized so the claim is
/// `lhs <= rhs`; `slack = rhs - lhs` must clear `-tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub method: ComparisonMethod,
    pub tolerance: f64,
}

impl ComparisonResult {
    fn closed(lhs: f64, rhs: f64) -> Self {
        let tolerance = ELEMENTARY_SLACK * lhs.abs().max(rhs.abs()).max(1.0);
        ComparisonResult { lhs, rhs, slack: rhs - lhs, method: ComparisonMethod::ClosedForm, tolerance }
    }

    /// True when the claimed `lhs <= rhs` holds within tolerance.
    pub fn holds(&self) -> bool {
        self.slack >= -self.tolerance
    }
}

fn require(cond: bool, msg: &str) -> Result<(), IneqError> {
    if cond {
        Ok(())
    } else {
        Err(IneqError::Precondition(msg.to_string()))
    }
}

/// Two-variable Muirhead comparison: for `p1 + q1 = p2 + q2` with the first
/// pair more spread out, `x^{p2} y^{q2} + x^{q2} y^{p2}` (lhs) is dominated
/// by `x^{p1} y^{q1} + x^{q1} y^{p1}` (rhs).
pub fn check_muirhead(
    x: f64,
    y: f64,
    p1: f64,
    q1: f64,
    p2: f64,
    q2: f64,
) -> Result<ComparisonResult, IneqError> {
    require(x >= 0.0 && y >= 0.0, "x, y must be nonnegative")?;
    require(0.0 <= p1 && p1 <= q1, "need 0 <= p1 <= q1")?;
    require(0.0 <= p2 && p2 <= q2, "need 0 <= p2 <= q2")?;
    require(((p1 + q1) - (p2 + q2)).abs() <= 1e-12, "exponent sums must match")?;
    require(q1 - p1 >= q2 - p2 - 1e-12, "first pair must majorize the second")?;
    let side = |a: f64, b: f64| x.powf(a) * y.powf(b) + x.powf(b) * y.powf(a);
    Ok(ComparisonResult::closed(side(p2, q2), side(p1, q1)))
}

/// Converse of superadditivity: `(x+y)^{k+q}` (lhs) is dominated by
/// `x^{k+q} + y^{k+q} + (2^k - 1)(x^k y^q + x^q y^k)` (rhs).
pub fn check_converse_super(
    x: f64,
    y: f64,
    k: u32,
    q: f64,
) -> Result<ComparisonResult, IneqError> {
    require(x >= 0.0 && y >= 0.0, "x, y must be nonnegative")?;
    require(k >= 1 && k <= 50, "k must be an integer in [1, 50]")?;
    require((0.0..=1.0).contains(&q), "q must lie in [0, 1]")?;
    let kf = k as f64;
    let ck = ((1u64 << k) - 1) as f64;
    let lhs = (x + y).powf(kf + q);
    let rhs = x.powf(kf + q)
        + y.powf(kf + q)
        + ck * (x.powf(kf) * y.powf(q) + x.powf(q) * y.powf(kf));
    Ok(ComparisonResult::closed(lhs, rhs))
}

/// Converse of subadditivity: `x^{p+q} + y^{p+q} - 2(x^p y^q + x^q y^p)`
/// (lhs) is dominated by `(x+y)^{p+q}` (rhs), for `1/2 <= p + q <= 1`.
pub fn check_converse_sub(x: f64, y: f64, p: f64, q: f64) -> Result<ComparisonResult, IneqError> {
    require(x >= 0.0 && y >= 0.0, "x, y must be nonnegative")?;
    require(p > 0.0 && q > 0.0, "p, q must be positive")?;
    let s = p + q;
    require((0.5..=1.0).contains(&s), "p + q must lie in [1/2, 1]")?;
    let lhs = x.powf(s) + y.powf(s) - 2.0 * (x.powf(p) * y.powf(q) + x.powf(q) * y.powf(p));
    Ok(ComparisonResult::closed(lhs, (x + y).powf(s)))
}

/// Sharp symmetric-case converse of subadditivity:
/// `x^{2p} + y^{2p}` (lhs) is dominated by
/// `(x+y)^{2p} + sqrt(2) x^p y^p` (rhs), for `1/4 <= p <= 1/2`.
pub fn check_converse_sub_sharp(x: f64, y: f64, p: f64) -> Result<ComparisonResult, IneqError> {
    require(x >= 0.0 && y >= 0.0, "x, y must be nonnegative")?;
    require((0.25..=0.5).contains(&p), "p must lie in [1/4, 1/2]")?;
    let lhs = x.powf(2.0 * p) + y.powf(2.0 * p);
    let rhs = (x + y).powf(2.0 * p) + 2.0f64.sqrt() * x.powf(p) * y.powf(p);
    Ok(ComparisonResult::closed(lhs, rhs))
}

/// Centered Gaussian vector of dimension at most 6, held as a row-major
/// covariance matrix validated symmetric with eigenvalues above `-1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVectorSpec {
    n: usize,
    cov: Vec<f64>,
}

impl GaussianVectorSpec {
    pub fn new(n: usize, cov: Vec<f64>) -> Result<Self, IneqError> {
        if n == 0 || n > 6 {
            return Err(IneqError::TooLarge(n));
        }
        require(cov.len() == n * n, "covariance must be n x n")?;
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                require(
                    (cov[i * n + j] - cov[j * n + i]).abs() <= 1e-12 * scale,
                    "covariance must be symmetric",
                )?;
            }
        }
        let eigs = jacobi_eigenvalues(&cov, n);
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-12 * scale.max(1.0) {
            return Err(IneqError::NotPsd(min));
        }
        Ok(GaussianVectorSpec { n, cov })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.n + j]
    }

    /// Lower Cholesky factor; degenerate directions get a `1e-12` lift.
    fn chol(&self) -> Vec<f64> {
        let n = self.n;
        let scale = self.cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for lift in [0.0, 1e-12 * scale] {
            let mut a = self.cov.clone();
            for i in 0..n {
                a[i * n + i] += lift;
            }
            if crate::kernel::cholesky_in_place(&mut a, n).is_ok() {
                for i in 0..n {
                    for j in (i + 1)..n {
                        a[i * n + j] = 0.0;
                    }
                }
                return a;
            }
        }
        unreachable!("validated PSD matrix failed Cholesky even with lift")
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    let scale = a.iter().fold(1e-300f64, |mx, v| mx.max(v.abs()));
    for _ in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[i * n + j].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Gauss-Hermite rule for the standard normal weight: nodes of the
/// order-`n` orthonormal recurrence via Golub-Welsch on the Jacobi matrix.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix: zero diagonal, off-diagonal sqrt(k).
    let mut a = vec![0.0f64; n * n];
    for k in 1..n {
        a[(k - 1) * n + k] = (k as f64).sqrt();
        a[k * n + k - 1] = (k as f64).sqrt();
    }
    // Jacobi rotations with eigenvector accumulation (first row only is
    // needed, but accumulating the full basis is simplest at this size).
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..128 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[i * n + j].abs());
            }
        }
        if off <= 1e-15 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-18 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (a[i * n + i], v[i] * v[i]))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

fn hermite_rule(order: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULE64: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static RULE32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match order {
        64 => RULE64.get_or_init(|| gauss_hermite(64)),
        32 => RULE32.get_or_init(|| gauss_hermite(32)),
        _ => unreachable!("only orders 32 and 64 are cached"),
    }
}

/// Sobol direction numbers for up to 6 dimensions (primitive polynomials
/// and initial values from the standard Joe-Kuo table).
struct Sobol {
    v: Vec<[u32; 32]>,
    x: Vec<u32>,
    index: u64,
}

impl Sobol {
    fn new(dims: usize) -> Sobol {
        assert!(dims >= 1 && dims <= 6);
        // (degree s, coefficient a, initial m values)
        const TABLE: [(u32, u32, [u32; 4]); 5] = [
            (1, 0, [1, 0, 0, 0]),
            (2, 1, [1, 3, 0, 0]),
            (3, 1, [1, 3, 1, 0]),
            (3, 2, [1, 1, 1, 0]),
            (4, 1, [1, 1, 3, 3]),
        ];
        let mut v = Vec::with_capacity(dims);
        let mut first = [0u32; 32];
        for (k, slot) in first.iter_mut().enumerate() {
            *slot = 1u32 << (31 - k);
        }
        v.push(first);
        for d in 1..dims {
            let (s, a, m) = TABLE[d - 1];
            let s = s as usize;
            let mut dir = [0u32; 32];
            for k in 0..32 {
                if k < s {
                    dir[k] = m[k] << (31 - k);
                } else {
                    let mut val = dir[k - s] ^ (dir[k - s] >> s);
                    for i in 1..s {
                        if (a >> (s - 1 - i)) & 1 == 1 {
                            val ^= dir[k - i];
                        }
                    }
                    dir[k] = val;
                }
            }
            v.push(dir);
        }
        Sobol { v, x: vec![0; dims], index: 0 }
    }

    /// Next point, Gray-code order, offset into the open unit cube.
    fn next(&mut self, out: &mut [f64]) {
        let bit = self.index.trailing_ones() as usize;
        self.index += 1;
        for (d, o) in out.iter_mut().enumerate() {
            self.x[d] ^= self.v[d][bit];
            *o = (self.x[d] as f64 + 0.5) * (1.0 / 4294967296.0);
        }
    }
}

/// Number of quasi-Monte Carlo points used above dimension 3.
pub const QMC_POINTS: usize = 1 << 16;

/// Whitelisted functionals for `slepian_verify`: every mixed second
/// derivative is nonnegative, so the `B` index set must be empty.
#[derive(Debug, Clone, PartialEq)]
pub enum SlepianFunctional {
    /// `F(x) = exp(sum c_i x_i)` with `c_i >= 0`.
    ExpLinear { coeffs: Vec<f64> },
    /// `F(x) = prod_i exp(a_i (x_i - var_i / 2))` with `a_i >= 0`: the
    /// cross-moment functional of renormalized exponentials. Requires equal
    /// diagonals on both sides so the renormalization is one functional.
    PowerProductExp { exponents: Vec<f64> },
}

/// Whitelisted convex functionals of the renormalized-exponential sum for
/// `kahane_verify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexFunctional {
    /// `F(t) = t^p` with `p >= 1` or `p <= 0` (convex on `t > 0`).
    Power { p: f64 },
    /// `F(t) = exp(c t)` with `c <= 0`: for positive `c` the expectation
    /// against a sum of lognormals is infinite.
    Exp { c: f64 },
    /// `F(t) = max(t - a, 0)`.
    ReluShift { a: f64 },
}

impl ConvexFunctional {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            ConvexFunctional::Power { p } => t.powf(p),
            ConvexFunctional::Exp { c } => (c * t).exp(),
            ConvexFunctional::ReluShift { a } => (t - a).max(0.0),
        }
    }
}

/// Backend selection for [`expected_convex_of_mass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassBackend {
    Auto,
    ClosedForm,
    Quadrature,
    QuasiMc,
}

/// `E[F(sum_i w_i e^{X_i - var_i / 2})]` with an error estimate.
///
/// Closed form exists for `F(t) = t^2`; otherwise tensor Gauss-Hermite
/// (n <= 3) or Sobol quasi-Monte Carlo (n <= 6), each with a two-level
/// error estimate.
pub fn expected_convex_of_mass(
    spec: &GaussianVectorSpec,
    weights: &[f64],
    f: ConvexFunctional,
    backend: MassBackend,
) -> Result<(f64, f64, ComparisonMethod), IneqError> {
    require(weights.len() == spec.n(), "one weight per coordinate")?;
    require(weights.iter().all(|w| *w >= 0.0), "weights must be nonnegative")?;
    if let ConvexFunctional::Exp { c } = f {
        require(
            c <= 0.0,
            "exp(c t) with c > 0 has an infinite expectation against lognormal masses",
        )?;
    }
    let n = spec.n();
    let closed_form = matches!(f, ConvexFunctional::Power { p } if p == 2.0);
    let backend = match backend {
        MassBackend::Auto if closed_form => MassBackend::ClosedForm,
        MassBackend::Auto if n <= 3 => MassBackend::Quadrature,
        MassBackend::Auto => MassBackend::QuasiMc,
        b => b,
    };
    match backend {
        MassBackend::ClosedForm => {
            require(closed_form, "closed form only exists for the square functional")?;
            let mut s = CompensatedSum::new();
            for i in 0..n {
                for j in 0..n {
                    s.add(weights[i] * weights[j] * spec.cov(i, j).exp());
                }
            }
            let v = s.value();
            Ok((v, 1e-14 * v.abs().max(1.0), ComparisonMethod::ClosedForm))
        }
        MassBackend::Quadrature => {
            require(n <= 3, "tensor quadrature is limited to dimension 3")?;
            let coarse = hermite_mass_integral(spec, weights, f, 32);
            let fine = hermite_mass_integral(spec, weights, f, 64);
            let err = (fine - coarse).abs().max(1e-14 * fine.abs().max(1.0));
            Ok((fine, err, ComparisonMethod::Quadrature))
        }
        MassBackend::QuasiMc => {
            let (value, err) = sobol_mass_integral(spec, weights, f);
            Ok((value, err, ComparisonMethod::QuasiMc))
        }
        MassBackend::Auto => unreachable!(),
    }
}

fn mass_at(spec: &GaussianVectorSpec, l: &[f64], weights: &[f64], z: &[f64]) -> f64 {
    let n = spec.n();
    let mut total = 0.0;
    for i in 0..n {
        let mut x = 0.0;
        for (k, zk) in z.iter().enumerate().take(i + 1) {
            x += l[i * n + k] * zk;
        }
        total += weights[i] * (x - 0.5 * spec.cov(i, i)).exp();
    }
    total
}

fn hermite_mass_integral(
    spec: &GaussianVectorSpec,
    weights: &[f64],
    f: ConvexFunctional,
    order: usize,
) -> f64 {
    let n = spec.n();
    let l = spec.chol();
    let (nodes, ws) = hermite_rule(order);
    let mut sum = CompensatedSum::new();
    let mut idx = vec![0usize; n];
    let mut z = vec![0.0f64; n];
    loop {
        let mut w = 1.0;
        for d in 0..n {
            z[d] = nodes[idx[d]];
            w *= ws[idx[d]];
        }
        sum.add(w * f.eval(mass_at(spec, &l, weights, &z)));
        // Odometer over the tensor grid.
        let mut d = 0;
        loop {
            if d == n {
                return sum.value();
            }
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn sobol_mass_integral(
    spec: &GaussianVectorSpec,
    weights: &[f64],
    f: ConvexFunctional,
) -> (f64, f64) {
    let n = spec.n();
    let l = spec.chol();
    let mut sobol = Sobol::new(n);
    let mut u = vec![0.0f64; n];
    let mut z = vec![0.0f64; n];
    // Doubling estimate: the first half of a power-of-two Sobol run is a
    // digital net itself, so |full - half| tracks the remaining error.
    let mut sum = CompensatedSum::new();
    let mut half_mean = 0.0;
    for i in 0..QMC_POINTS {
        sobol.next(&mut u);
        for d in 0..n {
            z[d] = crate::sampler::normal_quantile(u[d]);
        }
        sum.add(f.eval(mass_at(spec, &l, weights, &z)));
        if i + 1 == QMC_POINTS / 2 {
            half_mean = sum.value() / (QMC_POINTS / 2) as f64;
        }
    }
    let value = sum.value() / QMC_POINTS as f64;
    (value, (value - half_mean).abs().max(1e-13 * value.abs().max(1.0)))
}

fn pair_in(set: &[(usize, usize)], i: usize, j: usize) -> bool {
    set.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
}

/// Gaussian comparison in the two-sided Slepian form: `Y` must dominate `X`
/// in covariance off `B`, `X` must dominate `Y` off `A`, and the functional
/// must have nonnegative mixed derivatives on `A` (whitelist guarantees
/// this everywhere, hence `B` must be empty). Claims `E[F(X)] <= E[F(Y)]`.
pub fn slepian_verify(
    x: &GaussianVectorSpec,
    y: &GaussianVectorSpec,
    a: &[(usize, usize)],
    b: &[(usize, usize)],
    f: &SlepianFunctional,
) -> Result<ComparisonResult, IneqError> {
    require(x.n() == y.n(), "vectors must share a dimension")?;
    let n = x.n();
    require(
        b.is_empty(),
        "whitelisted functionals have nonnegative mixed derivatives everywhere, so B must be empty",
    )?;
    let scale = (0..n * n).fold(1.0f64, |m, k| m.max(x.cov[k].abs()).max(y.cov[k].abs()));
    for i in 0..n {
        for j in 0..n {
            // Y dominates X off B (= everywhere); X dominates Y off A.
            if y.cov(i, j) < x.cov(i, j) - 1e-14 * scale {
                return Err(IneqError::DominationFails { i, j, lo: x.cov(i, j), hi: y.cov(i, j) });
            }
            if !pair_in(a, i, j) && x.cov(i, j) < y.cov(i, j) - 1e-14 * scale {
                return Err(IneqError::DominationFails { i, j, lo: y.cov(i, j), hi: x.cov(i, j) });
            }
        }
    }
    let moment = |spec: &GaussianVectorSpec, c: &[f64]| -> f64 {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += c[i] * c[j] * spec.cov(i, j);
            }
        }
        (0.5 * q).exp()
    };
    let (lhs, rhs) = match f {
        SlepianFunctional::ExpLinear { coeffs } => {
            require(coeffs.len() == n, "one coefficient per coordinate")?;
            require(coeffs.iter().all(|c| *c >= 0.0), "coefficients must be nonnegative")?;
            (moment(x, coeffs), moment(y, coeffs))
        }
        SlepianFunctional::PowerProductExp { exponents } => {
            require(exponents.len() == n, "one exponent per coordinate")?;
            require(exponents.iter().all(|e| *e >= 0.0), "exponents must be nonnegative")?;
            for i in 0..n {
                require(
                    (x.cov(i, i) - y.cov(i, i)).abs() <= 1e-14 * scale,
                    "renormalized product requires equal diagonals",
                )?;
            }
            let renorm: f64 = (0..n).map(|i| exponents[i] * 0.5 * x.cov(i, i)).sum();
            (
                moment(x, exponents) * (-renorm).exp(),
                moment(y, exponents) * (-renorm).exp(),
            )
        }
    };
    let tolerance = 5e-15 * lhs.abs().max(rhs.abs()).max(1.0);
    Ok(ComparisonResult { lhs, rhs, slack: rhs - lhs, method: ComparisonMethod::ClosedForm, tolerance })
}

/// Kahane comparison: `Y` dominating `X` in covariance everywhere implies
/// `E[F(sum w_i e^{X_i - var/2})] <= E[F(sum w_i e^{Y_i - var/2})]` for
/// convex `F` and nonnegative weights.
pub fn kahane_verify(
    x: &GaussianVectorSpec,
    y: &GaussianVectorSpec,
    weights: &[f64],
    f: ConvexFunctional,
) -> Result<ComparisonResult, IneqError> {
    require(x.n() == y.n(), "vectors must share a dimension")?;
    if let ConvexFunctional::Power { p } = f {
        if p > 0.0 && p < 1.0 {
            return Err(IneqError::ConcaveExponent(p));
        }
    }
    let n = x.n();
    let scale = (0..n * n).fold(1.0f64, |m, k| m.max(x.cov[k].abs()).max(y.cov[k].abs()));
    for i in 0..n {
        for j in 0..n {
            if y.cov(i, j) < x.cov(i, j) - 1e-14 * scale {
                return Err(IneqError::DominationFails { i, j, lo: x.cov(i, j), hi: y.cov(i, j) });
            }
        }
    }
    let (lhs, el, ml) = expected_convex_of_mass(x, weights, f, MassBackend::Auto)?;
    let (rhs, er, _) = expected_convex_of_mass(y, weights, f, MassBackend::Auto)?;
    let tolerance = 5.0 * (el + er);
    Ok(ComparisonResult { lhs, rhs, slack: rhs - lhs, method: ml, tolerance })
}
