//! End-to-end experiment battery. Each function runs one scenario against a
//! predicted behavior of the measure and returns a [`Report`] of CSV tables
//! plus pass/fail checks; the CLI subcommands and the acceptance test both
//! call these, so every tolerance lives here next to the logic it gates.
//!
//! Shared conventions: boxes of one scenario sit inside a single sampling
//! grid, masses of all boxes are evaluated replicate by replicate from the
//! same field draw, and comparisons between coupled quantities are paired
//! per replicate. Constant kernel shifts multiply every moment of order p by
//! the same `exp(lambda * gamma^2 * p(p-1)/2)`, so ratio and slope checks
//! are shift-invariant; one-sided bound checks account for the shift in
//! their bound factor instead.

use crate::geometry::{horizontal_slices, vertical_slices, Side, UHPRect};
use crate::gmc::{cell_weight, deterministic_mass, GmcParams, MassEvaluator, MassResult};
use crate::inequalities::{
    check_converse_sub, check_converse_sub_sharp, check_converse_super, check_muirhead,
    expected_convex_of_mass, kahane_verify, shift_moment_factor, slepian_verify,
    ComparisonResult, ConvexFunctional, GaussianVectorSpec, MassBackend, SlepianFunctional,
};
use crate::kernel::{build_grid, factorize_cached, CovarianceSpec};
use crate::moments::{
    cross_moment, default_hill_k, estimate_moment, fit_line, localize_threshold, tail_index,
    threshold_pc, zeta_bar, EstimatorMethod, MomentEstimate,
};
use crate::report::{fmt_f64, CheckOutcome, Report, Table};
use crate::sampler::sample_batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Gmc(#[from] crate::gmc::GmcError),
    #[error(transparent)]
    Moment(#[from] crate::moments::MomentError),
    #[error(transparent)]
    Inequality(#[from] crate::inequalities::IneqError),
    #[error("{0}")]
    Config(String),
}

/// Run scale. `Full` reproduces the headline numbers in tens of minutes;
/// `Smoke` drives every code path in seconds with loose statistical gates,
/// for plumbing and byte-reproducibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Full,
    Smoke,
}

/// Sampling budget shared by the statistical scenarios.
#[derive(Debug, Clone)]
pub struct RunBudget {
    pub n_samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl RunBudget {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        RunBudget { n_samples, seed, workers: 1, cache_dir: None }
    }

    fn json(&self) -> serde_json::Value {
        json!({ "n_samples": self.n_samples, "seed": self.seed, "workers": self.workers })
    }
}

fn rect_json(r: &UHPRect) -> serde_json::Value {
    json!([r.x0, r.x1, r.y0, r.y1])
}

fn method_str(m: EstimatorMethod) -> &'static str {
    match m {
        EstimatorMethod::Mean => "mean",
        EstimatorMethod::MedianOfMeans => "median-of-means",
    }
}

/// Samples `budget.n_samples` field replicates on `grid_region` and returns
/// one mass series per requested region, all coupled through the shared
/// field draw.
pub fn collect_masses(
    grid_region: &UHPRect,
    epsilon: f64,
    lambda: f64,
    gamma: f64,
    regions: &[UHPRect],
    budget: &RunBudget,
) -> Result<Vec<Vec<MassResult>>, SuiteError> {
    let params = GmcParams::new(gamma)?;
    for r in regions {
        if !grid_region.contains(r) {
            return Err(SuiteError::Config(format!(
                "region {} is not inside the sampling grid {}",
                r.csv_row(),
                grid_region.csv_row()
            )));
        }
    }
    let grid = build_grid(grid_region, epsilon)?;
    let spec = CovarianceSpec::new(epsilon, lambda)?;
    let fac = factorize_cached(&grid, &spec, budget.cache_dir.as_deref())?;
    let refs: Vec<&UHPRect> = regions.iter().collect();
    let eval = MassEvaluator::new(&fac, &refs, &params)?;
    let mut series: Vec<Vec<MassResult>> =
        vec![Vec::with_capacity(budget.n_samples as usize); regions.len()];
    let mut buf = Vec::with_capacity(regions.len());
    sample_batch(&fac, budget.seed, 0, budget.n_samples, budget.workers, |id, values| {
        eval.log_masses(id, values, &mut buf);
        for (s, m) in series.iter_mut().zip(&buf) {
            s.push(*m);
        }
    });
    Ok(series)
}

fn estimate_row(epsilon: f64, est: &MomentEstimate) -> Vec<String> {
    vec![
        fmt_f64(epsilon),
        fmt_f64(est.p),
        fmt_f64(est.mean),
        fmt_f64(est.stderr),
        fmt_f64(est.log_mean),
        est.n_samples.to_string(),
        method_str(est.method).to_string(),
    ]
}

const ESTIMATE_HEADER: [&str; 7] =
    ["epsilon", "p", "mean", "stderr", "log_mean", "n_samples", "method"];

/// Exponent algebra of the scaling function `zeta_bar(p) = (2 + g^2/2) p -
/// g^2 p^2`: both roots of `zeta_bar = 1`, the factorization of `1 -
/// zeta_bar` through those roots, the strict sign between them, the
/// first-moment value `zeta_bar(1) = 2 - g^2/2`, and the position of the
/// moment threshold relative to 1/2 and 1.
pub fn exponent_algebra() -> Report {
    let n_gammas = 100;
    let p_points = 200;
    let tol = 1e-12;
    let mut report = Report::new(
        "exponent-algebra",
        json!({ "n_gammas": n_gammas, "p_points": p_points, "tolerance": tol, "seed": 0xA1 }),
    );
    let mut table = Table::new(
        "zeta-values",
        &[
            "gamma",
            "p_c",
            "dev_root_half",
            "dev_root_pc",
            "dev_factorization",
            "dev_first_moment",
            "sign_violations",
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut dev_half = 0.0f64;
    let mut dev_pc = 0.0f64;
    let mut dev_fact = 0.0f64;
    let mut dev_one = 0.0f64;
    let mut sign_violations = 0usize;
    let mut crossover_violations = 0usize;
    let mut min_pc = f64::INFINITY;
    let sqrt2 = 2.0f64.sqrt();
    for _ in 0..n_gammas {
        // Kept away from gamma = 0 where p_c blows up and the root identity
        // loses absolute precision to cancellation.
        let gamma = rng.gen_range(0.1f64..1.99);
        let g2 = gamma * gamma;
        let pc = threshold_pc(gamma);
        min_pc = min_pc.min(pc);
        let row_half = (zeta_bar(gamma, 0.5) - 1.0).abs();
        let row_pc = (zeta_bar(gamma, pc) - 1.0).abs();
        let row_one = (zeta_bar(gamma, 1.0) - (2.0 - 0.5 * g2)).abs();
        let mut row_fact = 0.0f64;
        let mut row_sign = 0usize;
        for i in 0..p_points {
            let p = -1.0 + 4.0 * i as f64 / (p_points - 1) as f64;
            let lhs = 1.0 - zeta_bar(gamma, p);
            let product = g2 * (p - 0.5) * (p - pc);
            row_fact = row_fact.max((lhs - product).abs() / lhs.abs().max(1.0));
            // Strictly negative iff p lies between the roots; points within
            // float distance of a root carry no sign information.
            if product.abs() > 1e-10 && lhs.signum() != product.signum() {
                row_sign += 1;
            }
        }
        if (gamma - sqrt2).abs() > 1e-3 && (pc - 1.0).signum() != (sqrt2 - gamma).signum() {
            crossover_violations += 1;
        }
        dev_half = dev_half.max(row_half);
        dev_pc = dev_pc.max(row_pc);
        dev_fact = dev_fact.max(row_fact);
        dev_one = dev_one.max(row_one);
        sign_violations += row_sign;
        table.push(vec![
            fmt_f64(gamma),
            fmt_f64(pc),
            fmt_f64(row_half),
            fmt_f64(row_pc),
            fmt_f64(row_fact),
            fmt_f64(row_one),
            row_sign.to_string(),
        ]);
    }
    report.tables.push(table);
    let c = &mut report.checks;
    c.push(CheckOutcome::within(
        "root-at-half",
        dev_half,
        0.0,
        tol,
        "max |zeta_bar(1/2) - 1| over the gamma draw".into(),
    ));
    c.push(CheckOutcome::within(
        "root-at-threshold",
        dev_pc,
        0.0,
        tol,
        "max |zeta_bar(2/gamma^2) - 1| over the gamma draw".into(),
    ));
    c.push(CheckOutcome::within(
        "factorization-identity",
        dev_fact,
        0.0,
        tol,
        "max relative |(1 - zeta_bar(p)) - gamma^2 (p - 1/2)(p - p_c)|".into(),
    ));
    c.push(CheckOutcome::at_most(
        "sign-pattern-violations",
        sign_violations as f64,
        0.0,
        0.0,
        "points where 1 - zeta_bar is negative outside (1/2, p_c) or positive inside".into(),
    ));
    c.push(CheckOutcome::within(
        "first-moment-exponent",
        dev_one,
        0.0,
        tol,
        "max |zeta_bar(1) - (2 - gamma^2/2)|".into(),
    ));
    c.push(CheckOutcome::at_most(
        "threshold-exceeds-half",
        0.5 - min_pc,
        0.0,
        0.0,
        format!("min p_c over the draw = {min_pc}"),
    ));
    c.push(CheckOutcome::within(
        "threshold-at-sqrt-two",
        threshold_pc(sqrt2),
        1.0,
        tol,
        "p_c = 1 exactly at the first-moment crossover".into(),
    ));
    c.push(CheckOutcome::at_most(
        "threshold-crossover-violations",
        crossover_violations as f64,
        0.0,
        0.0,
        "gammas where sign(p_c - 1) disagrees with sign(sqrt(2) - gamma)".into(),
    ));
    report
}

/// Deterministic first-moment survey of one region over an epsilon ladder.
/// Below the divergence point (`gamma^2/2 < 1`) the values must sit on the
/// closed-form integral with slope zero; above it the dyadic increments
/// must be an exact power law of exponent `gamma^2/2 - 1`.
pub fn first_moment_survey(
    region: &UHPRect,
    gamma: f64,
    eps_list: &[f64],
) -> Result<Report, SuiteError> {
    let params = GmcParams::new(gamma)?;
    if eps_list.len() < 2 {
        return Err(SuiteError::Config("need at least two epsilon values".into()));
    }
    let mut report = Report::new(
        "first-moment",
        json!({ "region": rect_json(region), "gamma": gamma, "epsilon_list": eps_list }),
    );
    let mut table = Table::new("survey", &["epsilon", "mass"]);
    let mut points = Vec::new();
    for &eps in eps_list {
        let mass = deterministic_mass(region, eps, &params)?;
        table.push(vec![fmt_f64(eps), fmt_f64(mass)]);
        points.push(((1.0 / eps).ln(), mass));
    }
    report.tables.push(table);
    let a = params.intensity();
    if a < 1.0 - 1e-12 {
        let logfit = fit_line(
            &points.iter().map(|&(x, m)| (x, m.ln())).collect::<Vec<_>>(),
        );
        report.checks.push(CheckOutcome::within(
            "flat-slope",
            logfit.slope,
            0.0,
            1e-6,
            "log mass vs log(1/epsilon) is constant below the divergence point".into(),
        ));
        let exact = cell_weight(region, &params)?;
        let finest = points.last().unwrap().1;
        report.checks.push(CheckOutcome::within(
            "closed-form-agreement",
            finest,
            exact,
            1e-3 * exact.abs().max(1.0),
            format!("finest-scale mass vs the exact integral {exact}"),
        ));
    } else if a > 1.0 + 1e-12 {
        let mut inc_points = Vec::new();
        for w in points.windows(2) {
            let d = w[1].1 - w[0].1;
            if d <= 0.0 {
                return Err(SuiteError::Config(
                    "mass increments must grow along a refining epsilon ladder".into(),
                ));
            }
            inc_points.push((w[1].0, d.ln()));
        }
        let fit = fit_line(&inc_points);
        report.checks.push(CheckOutcome::within(
            "blowup-increment-slope",
            fit.slope,
            a - 1.0,
            1e-6,
            "dyadic increments of the diverging mass are an exact power law".into(),
        ));
    }
    Ok(report)
}

/// Closed-form first-moment checks: the square-root integral over
/// `[-1,1] x [0,1]` at `gamma = 1`, and the constant-per-level slice law at
/// `gamma = sqrt(2)` where every dyadic slice carries mass `2 ln 2`.
pub fn first_moment_checks() -> Result<Report, SuiteError> {
    let region = UHPRect::new(-1.0, 1.0, 0.0, 1.0)?;
    let eps_list: Vec<f64> = (4..=10).map(|k| 0.5f64.powi(k)).collect();
    let mut report = first_moment_survey(&region, 1.0, &eps_list)?;
    report.config = json!({
        "survey": { "region": rect_json(&region), "gamma": 1.0, "epsilon_list": eps_list },
        "slice_law": { "gamma": "sqrt(2)", "levels": 4 },
    });

    let params = GmcParams::new(2.0f64.sqrt())?;
    let expected = 2.0 * std::f64::consts::LN_2;
    let mut table = Table::new("slice-law", &["level", "mass", "expected"]);
    for (n, slice) in horizontal_slices(1.0, 4)?.iter().enumerate() {
        // One grid row per slice: the row integral of 1/y is width * ln 2
        // at every level, with no epsilon left to choose.
        let mass = deterministic_mass(slice, slice.height(), &params)?;
        table.push(vec![n.to_string(), fmt_f64(mass), fmt_f64(expected)]);
        report.checks.push(CheckOutcome::within(
            &format!("slice-law-level-{n}"),
            mass,
            expected,
            1e-12,
            "dyadic slice mass is 2 ln 2 independent of the level".into(),
        ));
    }
    report.tables.push(table);
    Ok(report)
}

/// First-moment dichotomy in one report: flat in epsilon for `gamma = 1`,
/// and an exact increment power law of exponent `gamma^2/2 - 1` for
/// `gamma = 1.8`, both on `[-1,1] x [0,1]` over `epsilon = 2^-4 .. 2^-10`.
pub fn first_moment_dichotomy() -> Result<Report, SuiteError> {
    let region = UHPRect::new(-1.0, 1.0, 0.0, 1.0)?;
    let eps_list: Vec<f64> = (4..=10).map(|k| 0.5f64.powi(k)).collect();
    let mut report = Report::new(
        "dichotomy",
        json!({ "region": rect_json(&region), "gammas": [1.0, 1.8], "epsilon_list": eps_list }),
    );
    let mut table = Table::new("first-moments", &["gamma", "epsilon", "mass"]);
    for &gamma in &[1.0f64, 1.8] {
        let params = GmcParams::new(gamma)?;
        let mut points = Vec::new();
        for &eps in &eps_list {
            let mass = deterministic_mass(&region, eps, &params)?;
            table.push(vec![fmt_f64(gamma), fmt_f64(eps), fmt_f64(mass)]);
            points.push(((1.0 / eps).ln(), mass));
        }
        if params.intensity() < 1.0 {
            let fit = fit_line(
                &points.iter().map(|&(x, m)| (x, m.ln())).collect::<Vec<_>>(),
            );
            report.checks.push(CheckOutcome::within(
                "flat-slope-gamma-1",
                fit.slope,
                0.0,
                1e-6,
                "bounded branch: log mass is constant in epsilon".into(),
            ));
        } else {
            let inc: Vec<(f64, f64)> =
                points.windows(2).map(|w| (w[1].0, (w[1].1 - w[0].1).ln())).collect();
            let fit = fit_line(&inc);
            report.checks.push(CheckOutcome::within(
                "blowup-increment-slope-gamma-1.8",
                fit.slope,
                params.intensity() - 1.0,
                1e-6,
                "diverging branch: increments scale exactly like epsilon^(1 - gamma^2/2)".into(),
            ));
        }
    }
    report.tables.push(table);
    Ok(report)
}

/// Exact scaling relation: moments on `A` at scale `epsilon` against
/// moments on `r A` at scale `r epsilon`. The Monte Carlo ratio must match
/// `r^zeta_bar(p)` within 3 combined standard errors; the deterministic
/// first-moment ratio must equal `r^(2 - gamma^2/2)` to float precision.
pub fn scaling_check(
    a: &UHPRect,
    r: f64,
    p: f64,
    gamma: f64,
    epsilon: f64,
    lambda: f64,
    budget: &RunBudget,
) -> Result<Report, SuiteError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(SuiteError::Config(format!("scale factor must be positive, got {r}")));
    }
    let params = GmcParams::new(gamma)?;
    let pc = threshold_pc(gamma);
    if !(p.is_finite() && p >= 0.0 && p <= pc - 0.1) {
        return Err(SuiteError::Config(format!(
            "p = {p} must lie in [0, p_c - 0.1] = [0, {:.4}] for a stable two-sided comparison",
            pc - 0.1
        )));
    }
    let ra = a.scaled(r)?;
    let mut report = Report::new(
        "scaling",
        json!({
            "region": rect_json(a), "scaled_region": rect_json(&ra), "r": r, "p": p,
            "gamma": gamma, "epsilon": epsilon, "lambda": lambda, "budget": budget.json(),
        }),
    );

    let masses_a = collect_masses(a, epsilon, lambda, gamma, &[*a], budget)?.pop().unwrap();
    let masses_ra =
        collect_masses(&ra, r * epsilon, lambda, gamma, &[ra], budget)?.pop().unwrap();
    let ma = estimate_moment(&masses_a, p)?;
    let mra = estimate_moment(&masses_ra, p)?;

    let mut table = Table::new(
        "moments",
        &["side", "x0", "x1", "y0", "y1", "epsilon", "p", "mean", "stderr", "log_mean", "n_samples", "method"],
    );
    for (side, region, eps, est) in
        [("base", a, epsilon, &ma), ("scaled", &ra, r * epsilon, &mra)]
    {
        table.push(vec![
            side.to_string(),
            fmt_f64(region.x0),
            fmt_f64(region.x1),
            fmt_f64(region.y0),
            fmt_f64(region.y1),
            fmt_f64(eps),
            fmt_f64(p),
            fmt_f64(est.mean),
            fmt_f64(est.stderr),
            fmt_f64(est.log_mean),
            est.n_samples.to_string(),
            method_str(est.method).to_string(),
        ]);
    }
    report.tables.push(table);

    let expected = r.powf(zeta_bar(gamma, p));
    let ratio = (mra.log_mean - ma.log_mean).exp();
    let rel_se = ((mra.stderr / mra.mean).powi(2) + (ma.stderr / ma.mean).powi(2)).sqrt();
    let se = rel_se * ratio;
    let diff = ratio - expected;
    let z = if diff == 0.0 { 0.0 } else { diff / se };
    let mut ratio_table = Table::new("ratio", &["observed", "expected", "stderr", "z_score"]);
    ratio_table.push(vec![fmt_f64(ratio), fmt_f64(expected), fmt_f64(se), fmt_f64(z)]);
    report.tables.push(ratio_table);
    report.checks.push(CheckOutcome::at_most(
        "moment-ratio-z",
        z.abs(),
        3.0,
        0.0,
        format!("ratio {ratio} vs r^zeta_bar = {expected}"),
    ));

    let det_a = deterministic_mass(a, epsilon, &params)?;
    let det_ra = deterministic_mass(&ra, r * epsilon, &params)?;
    let det_expected = r.powf(2.0 - params.intensity());
    report.checks.push(CheckOutcome::within(
        "deterministic-ratio",
        det_ra / det_a,
        det_expected,
        1e-12 * det_expected,
        "first-moment ratio under joint rescaling of region and cutoff".into(),
    ));
    Ok(report)
}

/// Scan output: the report plus the finest-scale masses, which the tail
/// diagnostics reuse so the heaviest sampling pass is paid once.
pub struct ScanOutput {
    pub report: Report,
    pub finest_masses: Vec<MassResult>,
}

/// Moment divergence scan: estimates `E[mass^p]` over a dyadic epsilon
/// ladder for each order in `p_grid`, fits the growth slope in
/// `log(1/epsilon)`, and compares against `max(0, 1 - zeta_bar(p))`. When
/// the order grid straddles the threshold, a least-squares localization of
/// the slope zero-crossing is checked against `2/gamma^2`.
pub fn divergence_scan(
    region: &UHPRect,
    gamma: f64,
    p_grid: &[f64],
    eps_list: &[f64],
    lambda: f64,
    slope_tol: f64,
    pc_tol: Option<f64>,
    budget: &RunBudget,
) -> Result<ScanOutput, SuiteError> {
    if p_grid.is_empty() || p_grid.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(SuiteError::Config("order grid must be finite and positive".into()));
    }
    if eps_list.len() < 2 {
        return Err(SuiteError::Config("need at least two epsilon values".into()));
    }
    for w in eps_list.windows(2) {
        if (w[1] - 0.5 * w[0]).abs() > 1e-12 * w[0] {
            return Err(SuiteError::Config(format!(
                "epsilon ladder must halve at every step, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    let mut report = Report::new(
        "moment-threshold",
        json!({
            "region": rect_json(region), "gamma": gamma, "p_grid": p_grid,
            "epsilon_list": eps_list, "lambda": lambda, "slope_tolerance": slope_tol,
            "threshold_tolerance": pc_tol, "budget": budget.json(),
        }),
    );
    let mut estimates = Table::new("estimates", &ESTIMATE_HEADER);
    let mut per_p: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p_grid.len()];
    let mut finest_masses = Vec::new();
    for (ei, &eps) in eps_list.iter().enumerate() {
        let masses = collect_masses(region, eps, lambda, gamma, &[*region], budget)?.pop().unwrap();
        for (pi, &p) in p_grid.iter().enumerate() {
            let est = estimate_moment(&masses, p)?;
            estimates.push(estimate_row(eps, &est));
            per_p[pi].push(((1.0 / eps).ln(), est.log_mean));
        }
        if ei + 1 == eps_list.len() {
            finest_masses = masses;
        }
    }
    report.tables.push(estimates);

    let mut slopes = Table::new("slopes", &["p", "slope", "slope_se", "theory"]);
    let mut slope_pairs = Vec::new();
    for (pi, &p) in p_grid.iter().enumerate() {
        let fit = fit_line(&per_p[pi]);
        let theory = (1.0 - zeta_bar(gamma, p)).max(0.0);
        slopes.push(vec![
            fmt_f64(p),
            fmt_f64(fit.slope),
            fmt_f64(fit.slope_se),
            fmt_f64(theory),
        ]);
        slope_pairs.push((p, fit.slope));
        report.checks.push(CheckOutcome::within(
            &format!("slope-p-{p}"),
            fit.slope,
            theory,
            slope_tol,
            "moment growth exponent vs max(0, 1 - zeta_bar(p))".into(),
        ));
    }
    report.tables.push(slopes);

    if let Some(tol) = pc_tol {
        let pc = threshold_pc(gamma);
        let lo = p_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if p_grid.len() >= 3 && lo < pc && pc < hi {
            let estimate = localize_threshold(gamma, &slope_pairs);
            let mut t = Table::new("threshold", &["estimate", "theory"]);
            t.push(vec![fmt_f64(estimate), fmt_f64(pc)]);
            report.tables.push(t);
            report.checks.push(CheckOutcome::within(
                "threshold-estimate",
                estimate,
                pc,
                tol,
                "zero-crossing of the fitted slope model vs 2/gamma^2".into(),
            ));
        } else {
            return Err(SuiteError::Config(format!(
                "threshold localization needs at least 3 orders straddling p_c = {pc:.4}"
            )));
        }
    }
    Ok(ScanOutput { report, finest_masses })
}

/// Appends a Hill tail-index table (a stability sweep over the tail size)
/// and, when `alpha_tol` is set, checks the main estimate against the
/// moment threshold `2/gamma^2` and requires the confidence interval to
/// cover it.
pub fn append_tail_diagnostics(
    report: &mut Report,
    masses: &[MassResult],
    gamma: f64,
    k_override: Option<usize>,
    alpha_tol: Option<f64>,
) -> Result<(), SuiteError> {
    let logs: Vec<f64> = masses.iter().map(|m| m.log_mass).collect();
    let n = logs.len();
    let k_cap = (n / 10).max(20);
    let k_main = k_override.unwrap_or_else(|| default_hill_k(n)).clamp(20, k_cap);
    let pc = threshold_pc(gamma);
    let mut table = Table::new(
        "tail",
        &["k", "alpha", "ci_lo", "ci_hi", "alpha_half_k", "alpha_double_k", "stable"],
    );
    let mut ks: Vec<usize> =
        [k_main / 4, k_main / 2, k_main, 2 * k_main, 4 * k_main]
            .iter()
            .map(|&k| k.clamp(20, k_cap))
            .collect();
    ks.dedup();
    let mut main = None;
    for k in ks {
        let t = tail_index(&logs, k)?;
        table.push(vec![
            t.k.to_string(),
            fmt_f64(t.alpha),
            fmt_f64(t.ci_lo),
            fmt_f64(t.ci_hi),
            fmt_f64(t.alpha_at_half_k),
            fmt_f64(t.alpha_at_double_k),
            t.stable.to_string(),
        ]);
        if k == k_main {
            main = Some(t);
        }
    }
    report.tables.push(table);
    let main = main.expect("main tail size is always in the sweep");
    if let Some(tol) = alpha_tol {
        report.checks.push(CheckOutcome::within(
            "tail-alpha",
            main.alpha,
            pc,
            tol,
            format!("Hill estimate at k = {} vs the moment threshold", main.k),
        ));
        report.checks.push(CheckOutcome::within(
            "tail-ci-covers-threshold",
            pc,
            0.5 * (main.ci_lo + main.ci_hi),
            0.5 * (main.ci_hi - main.ci_lo),
            format!("CI [{}, {}]", main.ci_lo, main.ci_hi),
        ));
    }
    Ok(())
}

/// Standalone tail report: samples one grid and runs the Hill diagnostics
/// on the mass series.
pub fn tail_report(
    region: &UHPRect,
    gamma: f64,
    epsilon: f64,
    lambda: f64,
    k_override: Option<usize>,
    alpha_tol: Option<f64>,
    budget: &RunBudget,
) -> Result<Report, SuiteError> {
    let mut report = Report::new(
        "tail",
        json!({
            "region": rect_json(region), "gamma": gamma, "epsilon": epsilon,
            "lambda": lambda, "hill_k": k_override, "alpha_tolerance": alpha_tol,
            "budget": budget.json(),
        }),
    );
    let masses = collect_masses(region, epsilon, lambda, gamma, &[*region], budget)?.pop().unwrap();
    let est = estimate_moment(&masses, 1.0)?;
    let mut moments = Table::new("estimates", &ESTIMATE_HEADER);
    moments.push(estimate_row(epsilon, &est));
    report.tables.push(moments);
    append_tail_diagnostics(&mut report, &masses, gamma, k_override, alpha_tol)?;
    Ok(report)
}

/// Decorrelation across a gap: for boxes separated by `delta` the kernel is
/// at most `lambda - 2 ln delta`, so the coupled cross moment is bounded by
/// `exp(gamma^2 k q (lambda - 2 ln delta))` times the product of marginal
/// moments. Checked one-sided with 3 combined standard errors of slack.
pub fn decorrelation_check(
    gamma: f64,
    k: f64,
    q: f64,
    deltas: &[f64],
    epsilon: f64,
    lambda: f64,
    budget: &RunBudget,
) -> Result<Report, SuiteError> {
    let r = 0.5f64;
    let grid_region = UHPRect::new(-r, r, 0.0, r)?;
    let ql = UHPRect::new(-r, 0.0, 0.0, r)?;
    if deltas.is_empty() {
        return Err(SuiteError::Config("need at least one gap width".into()));
    }
    let mut regions = vec![ql];
    for &delta in deltas {
        if !(delta > 0.0 && delta < r) {
            return Err(SuiteError::Config(format!("gap {delta} must lie in (0, {r})")));
        }
        regions.push(UHPRect::new(delta, r, 0.0, r)?);
    }
    let mut report = Report::new(
        "decorrelation",
        json!({
            "grid_region": rect_json(&grid_region), "left_box": rect_json(&ql),
            "gamma": gamma, "k": k, "q": q, "deltas": deltas, "epsilon": epsilon,
            "lambda": lambda, "budget": budget.json(),
        }),
    );
    let series = collect_masses(&grid_region, epsilon, lambda, gamma, &regions, budget)?;
    let left = &series[0];
    let ml = estimate_moment(left, k)?;
    let mut table = Table::new(
        "cases",
        &[
            "delta",
            "k",
            "q",
            "cross_mean",
            "cross_stderr",
            "marginal_left",
            "marginal_right",
            "bound_factor",
            "slack_ratio",
            "rel_se",
        ],
    );
    for (i, &delta) in deltas.iter().enumerate() {
        let right = &series[i + 1];
        let cross = cross_moment(left, right, k, q)?;
        let mr = estimate_moment(right, q)?;
        let bound_factor = (gamma * gamma * k * q * (lambda - 2.0 * delta.ln())).exp();
        let slack_ratio = cross.mean / (bound_factor * ml.mean * mr.mean);
        let rel_se = ((cross.stderr / cross.mean).powi(2)
            + (ml.stderr / ml.mean).powi(2)
            + (mr.stderr / mr.mean).powi(2))
        .sqrt();
        table.push(vec![
            fmt_f64(delta),
            fmt_f64(k),
            fmt_f64(q),
            fmt_f64(cross.mean),
            fmt_f64(cross.stderr),
            fmt_f64(ml.mean),
            fmt_f64(mr.mean),
            fmt_f64(bound_factor),
            fmt_f64(slack_ratio),
            fmt_f64(rel_se),
        ]);
        report.checks.push(CheckOutcome::at_most(
            &format!("bound-slack-delta-{delta}"),
            slack_ratio,
            1.0,
            3.0 * rel_se,
            "cross moment over the boosted product of marginals".into(),
        ));
    }
    report.tables.push(table);
    Ok(report)
}

/// Paired z-score of `E[base^k (second^q - first^q)]`: positive when the
/// second cross moment exceeds the first. Pairing by replicate removes the
/// shared field noise, which is what makes 3-sigma one-sided checks sharp
/// at moderate sample sizes.
fn paired_excess_z(
    base: &[MassResult],
    first: &[MassResult],
    second: &[MassResult],
    k: f64,
    q: f64,
) -> f64 {
    let n = base.len();
    let mut shift = f64::NEG_INFINITY;
    for i in 0..n {
        let b = k * base[i].log_mass;
        shift = shift.max(b + q * first[i].log_mass).max(b + q * second[i].log_mass);
    }
    let mut mean = 0.0;
    for i in 0..n {
        let b = k * base[i].log_mass - shift;
        mean += (b + q * second[i].log_mass).exp() - (b + q * first[i].log_mass).exp();
    }
    mean /= n as f64;
    let mut var = 0.0;
    for i in 0..n {
        let b = k * base[i].log_mass - shift;
        let d = (b + q * second[i].log_mass).exp() - (b + q * first[i].log_mass).exp() - mean;
        var += d * d;
    }
    let se = (var / (n as f64 * (n - 1) as f64)).sqrt();
    if mean == 0.0 {
        0.0
    } else {
        mean / se
    }
}

/// Box-moving comparisons against full-height vertical strips of width
/// `delta = r/4` on `[-r, r] x [0, r]` with `r = 1/2`:
/// cross moments with the left half must be non-increasing as the strip
/// moves away from it, the mirrored adjacent strip must dominate the
/// adjacent one, the mirror symmetry must be exact with the noise turned
/// off, and the cross moment against the adjacent strip of width `r/N`
/// must scale like `delta^q_agg` over `N in {2, 4, 8}`.
pub fn box_moving_check(
    gamma: f64,
    k: f64,
    q: f64,
    q_agg: f64,
    epsilon: f64,
    lambda: f64,
    agg_tol: f64,
    budget: &RunBudget,
) -> Result<Report, SuiteError> {
    let r = 0.5f64;
    let grid_region = UHPRect::new(-r, r, 0.0, r)?;
    let ql = UHPRect::new(-r, 0.0, 0.0, r)?;
    let strips = vertical_slices(r, 4, Side::Right)?;
    let mirror = strips[0].mirrored();
    let agg_subdiv: [u32; 3] = [2, 4, 8];
    let mut regions = vec![ql];
    regions.extend_from_slice(&strips);
    regions.push(mirror);
    for &n_sub in &agg_subdiv {
        regions.push(vertical_slices(r, n_sub, Side::Right)?[0]);
    }
    let mut report = Report::new(
        "box-moving",
        json!({
            "grid_region": rect_json(&grid_region), "left_box": rect_json(&ql),
            "gamma": gamma, "k": k, "q": q, "q_agg": q_agg, "epsilon": epsilon,
            "lambda": lambda, "aggregate_subdivisions": agg_subdiv,
            "aggregate_tolerance": agg_tol, "budget": budget.json(),
        }),
    );
    let series = collect_masses(&grid_region, epsilon, lambda, gamma, &regions, budget)?;
    let left = &series[0];
    let strip_series = &series[1..5];
    let mirror_series = &series[5];
    let agg_series = &series[6..9];

    let mut moving = Table::new("moving", &["j", "x0", "x1", "cross_mean", "cross_stderr"]);
    for (j, s) in strip_series.iter().enumerate() {
        let cross = cross_moment(left, s, k, q)?;
        moving.push(vec![
            (j + 1).to_string(),
            fmt_f64(strips[j].x0),
            fmt_f64(strips[j].x1),
            fmt_f64(cross.mean),
            fmt_f64(cross.stderr),
        ]);
    }
    report.tables.push(moving);

    let mut pairwise = Table::new("pairwise", &["comparison", "z_score"]);
    for j in 0..3 {
        let z = paired_excess_z(left, &strip_series[j], &strip_series[j + 1], k, q);
        pairwise.push(vec![format!("j{}-to-j{}", j + 1, j + 2), fmt_f64(z)]);
        report.checks.push(CheckOutcome::at_most(
            &format!("moving-decay-j{}-to-j{}", j + 1, j + 2),
            z,
            0.0,
            3.0,
            "paired excess of the farther strip's cross moment".into(),
        ));
    }
    let z_reflect = paired_excess_z(left, mirror_series, &strip_series[0], k, q);
    pairwise.push(vec!["adjacent-over-mirror".to_string(), fmt_f64(z_reflect)]);
    report.checks.push(CheckOutcome::at_most(
        "reflection-dominates-adjacency",
        z_reflect,
        0.0,
        3.0,
        "paired excess of the opposite-side strip over its same-side mirror".into(),
    ));
    report.tables.push(pairwise);

    let params = GmcParams::new(gamma)?;
    let det_right = deterministic_mass(&strips[0], epsilon, &params)?;
    let det_mirror = deterministic_mass(&mirror, epsilon, &params)?;
    report.checks.push(CheckOutcome::within(
        "mirror-symmetry-deterministic",
        det_mirror,
        det_right,
        0.0,
        "noise-free strip masses are bitwise mirror symmetric".into(),
    ));

    let mut aggregate = Table::new(
        "aggregate",
        &["n_subdiv", "delta", "cross_mean", "cross_stderr", "cross_log_mean"],
    );
    let mut points = Vec::new();
    for (i, &n_sub) in agg_subdiv.iter().enumerate() {
        let delta = r / n_sub as f64;
        let cross = cross_moment(left, &agg_series[i], k, q_agg)?;
        aggregate.push(vec![
            n_sub.to_string(),
            fmt_f64(delta),
            fmt_f64(cross.mean),
            fmt_f64(cross.stderr),
            fmt_f64(cross.log_mean),
        ]);
        points.push(((1.0 / delta).ln(), cross.log_mean));
    }
    report.tables.push(aggregate);
    let fit = fit_line(&points);
    report.checks.push(CheckOutcome::within(
        "adjacent-aggregate-exponent",
        -fit.slope,
        q_agg,
        agg_tol,
        "adjacent cross moment shrinks like delta^q as the strip narrows".into(),
    ));
    Ok(report)
}

/// Dyadic slice diagnostics on `[-r, r] x [0, r]`: per-level moment
/// estimates at order `p` for manual inspection of the small-scale trend,
/// plus exact checks of the deterministic per-level mass ratio
/// `2^(gamma^2/2 - 1)`. The statistical rows carry no pass/fail gates; at
/// this scale the limit statements they approximate are out of reach.
pub fn slice_moment_sequence(
    r: f64,
    levels: u32,
    p: f64,
    gamma: f64,
    lambda: f64,
    budget: &RunBudget,
) -> Result<Report, SuiteError> {
    if levels < 2 {
        return Err(SuiteError::Config("need at least two slice levels".into()));
    }
    let slices = horizontal_slices(r, levels)?;
    let epsilon = slices.last().unwrap().height();
    // Grid floor sits at the bottom of the deepest slice, so every slice is
    // a whole number of epsilon rows.
    let grid_region = UHPRect::new(-r, r, slices.last().unwrap().y0, r)?;
    let mut report = Report::new(
        "slice-moments",
        json!({
            "r": r, "levels": levels, "p": p, "gamma": gamma, "epsilon": epsilon,
            "lambda": lambda, "budget": budget.json(),
        }),
    );
    let params = GmcParams::new(gamma)?;
    let series = collect_masses(&grid_region, epsilon, lambda, gamma, &slices, budget)?;
    let mut table = Table::new(
        "slices",
        &["level", "y0", "y1", "det_mass", "mean", "stderr", "log_mean", "method"],
    );
    let mut det = Vec::new();
    for (n, slice) in slices.iter().enumerate() {
        let d = deterministic_mass(slice, epsilon, &params)?;
        let est = estimate_moment(&series[n], p)?;
        table.push(vec![
            n.to_string(),
            fmt_f64(slice.y0),
            fmt_f64(slice.y1),
            fmt_f64(d),
            fmt_f64(est.mean),
            fmt_f64(est.stderr),
            fmt_f64(est.log_mean),
            method_str(est.method).to_string(),
        ]);
        det.push(d);
    }
    report.tables.push(table);
    let expected = 2.0f64.powf(params.intensity() - 1.0);
    for n in 1..det.len() {
        report.checks.push(CheckOutcome::within(
            &format!("det-ratio-level-{n}"),
            det[n] / det[n - 1],
            expected,
            1e-12 * expected,
            "deterministic per-level mass ratio 2^(gamma^2/2 - 1)".into(),
        ));
    }
    Ok(report)
}

fn relative_slack(r: &ComparisonResult) -> f64 {
    r.slack / r.lhs.abs().max(r.rhs.abs()).max(1.0)
}

/// Randomized verification of the four elementary moment inequalities, one
/// table row per proposition with counterexamples dumped when a relative
/// slack dips below `-1e-12`.
pub fn elementary_fuzz(cases: u64, seed: u64) -> Report {
    let mut report =
        Report::new("elementary-inequalities", json!({ "cases": cases, "seed": seed }));
    let mut props = Table::new(
        "propositions",
        &["proposition", "cases", "violations", "min_relative_slack"],
    );
    let mut counterexamples =
        Table::new("counterexamples", &["proposition", "x", "y", "a", "b", "c", "d", "lhs", "rhs", "slack"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;

    let run = |name: &str,
                   rng: &mut ChaCha8Rng,
                   mut case: Box<dyn FnMut(&mut ChaCha8Rng) -> (ComparisonResult, [f64; 6])>,
                   props: &mut Table,
                   counterexamples: &mut Table,
                   checks: &mut Vec<CheckOutcome>| {
        let mut violations = 0u64;
        let mut min_slack = f64::INFINITY;
        for _ in 0..cases {
            let (res, inputs) = case(rng);
            let rel = relative_slack(&res);
            min_slack = min_slack.min(rel);
            if rel < -tol {
                violations += 1;
                if counterexamples.rows.len() < 32 {
                    let mut row = vec![name.to_string()];
                    row.extend(inputs.iter().map(|v| fmt_f64(*v)));
                    row.push(fmt_f64(res.lhs));
                    row.push(fmt_f64(res.rhs));
                    row.push(fmt_f64(res.slack));
                    counterexamples.push(row);
                }
            }
        }
        props.push(vec![
            name.to_string(),
            cases.to_string(),
            violations.to_string(),
            fmt_f64(min_slack),
        ]);
        checks.push(CheckOutcome::at_most(
            &format!("violations-{name}"),
            violations as f64,
            0.0,
            0.0,
            format!("relative slack floor {min_slack}"),
        ));
    };

    run(
        "muirhead",
        &mut rng,
        Box::new(|rng| {
            let x = rng.gen_range(0.0..1e3);
            let y = rng.gen_range(0.0..1e3);
            let s = rng.gen_range(0.1f64..3.0);
            let d1 = rng.gen_range(0.0f64..1.0);
            let d2 = rng.gen_range(0.0f64..1.0) * d1;
            let half = 0.5 * s;
            let (p1, q1) = ((half - half * d1).max(0.0), half + half * d1);
            let (p2, q2) = ((half - half * d2).max(0.0), half + half * d2);
            (check_muirhead(x, y, p1, q1, p2, q2).unwrap(), [x, y, p1, q1, p2, q2])
        }),
        &mut props,
        &mut counterexamples,
        &mut report.checks,
    );
    run(
        "converse-superadditivity",
        &mut rng,
        Box::new(|rng| {
            let x = rng.gen_range(0.0..1e3);
            let y = rng.gen_range(0.0..1e3);
            let k = rng.gen_range(1..=3u32);
            let q = rng.gen_range(0.0..=1.0);
            (check_converse_super(x, y, k, q).unwrap(), [x, y, k as f64, q, 0.0, 0.0])
        }),
        &mut props,
        &mut counterexamples,
        &mut report.checks,
    );
    run(
        "converse-subadditivity",
        &mut rng,
        Box::new(|rng| {
            let x = rng.gen_range(0.0..1e3);
            let y = rng.gen_range(0.0..1e3);
            let s = rng.gen_range(0.5..=1.0);
            let p = rng.gen_range(s * 1e-6..s * (1.0 - 1e-6));
            (check_converse_sub(x, y, p, s - p).unwrap(), [x, y, p, s - p, 0.0, 0.0])
        }),
        &mut props,
        &mut counterexamples,
        &mut report.checks,
    );
    run(
        "converse-subadditivity-sharp",
        &mut rng,
        Box::new(|rng| {
            let x = rng.gen_range(0.0..1e3);
            let y = rng.gen_range(0.0..1e3);
            let p = rng.gen_range(0.25..=0.5);
            (check_converse_sub_sharp(x, y, p).unwrap(), [x, y, p, 0.0, 0.0, 0.0])
        }),
        &mut props,
        &mut counterexamples,
        &mut report.checks,
    );

    report.tables.push(props);
    report.tables.push(counterexamples);
    report
}

/// Gaussian comparison battery: the closed-form ordered-exponential
/// example, the decoupling boost factor, the moment shift constants, the
/// square-functional monotonicity under covariance bumps, and the agreement
/// of the quadrature and quasi-random backends with closed forms.
pub fn gaussian_comparison_checks() -> Result<Report, SuiteError> {
    let mut report = Report::new(
        "gaussian-comparisons",
        json!({ "kahane_perturbations": 100, "perturbation_seed": 42 }),
    );
    let mut table =
        Table::new("comparisons", &["name", "lhs", "rhs", "slack", "method", "tolerance"]);
    let push = |table: &mut Table, name: &str, r: &ComparisonResult| {
        table.push(vec![
            name.to_string(),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.slack),
            format!("{:?}", r.method).to_lowercase(),
            fmt_f64(r.tolerance),
        ]);
    };

    // Ordered exponential moments: independent unit pair against a
    // half-correlated one, E[e^(X1+X2)] = e vs e^1.5.
    let x = GaussianVectorSpec::new(2, vec![1.0, 0.0, 0.0, 1.0])?;
    let y = GaussianVectorSpec::new(2, vec![1.0, 0.5, 0.5, 1.0])?;
    let f = SlepianFunctional::ExpLinear { coeffs: vec![1.0, 1.0] };
    let slepian = slepian_verify(&x, &y, &[(0, 1)], &[], &f)?;
    push(&mut table, "ordered-exponential", &slepian);
    let e = std::f64::consts::E;
    report.checks.push(CheckOutcome::within(
        "slepian-lhs-closed-form",
        slepian.lhs,
        e,
        1e-14 * e,
        "E[exp(X1 + X2)] for the independent unit pair".into(),
    ));
    report.checks.push(CheckOutcome::within(
        "slepian-rhs-closed-form",
        slepian.rhs,
        1.5f64.exp(),
        1e-14 * 1.5f64.exp(),
        "E[exp(Y1 + Y2)] with covariance 1/2".into(),
    ));
    report.checks.push(CheckOutcome::at_most(
        "slepian-ordered",
        slepian.lhs - slepian.rhs,
        0.0,
        slepian.tolerance,
        "dominated covariance gives the smaller exponential moment".into(),
    ));

    // Decoupling boost: cross covariance b against independence, ratio of
    // renormalized product moments is exactly e^b.
    let delta: f64 = 0.5;
    let b = -2.0 * delta.ln();
    let v = 1.3;
    let xb = GaussianVectorSpec::new(2, vec![v + b, 0.0, 0.0, v + b])?;
    let yb = GaussianVectorSpec::new(2, vec![v + b, b, b, v + b])?;
    let fb = SlepianFunctional::PowerProductExp { exponents: vec![1.0, 1.0] };
    let boost = slepian_verify(&xb, &yb, &[(0, 1)], &[], &fb)?;
    push(&mut table, "decoupling-boost", &boost);
    report.checks.push(CheckOutcome::within(
        "decoupling-boost-ratio",
        boost.rhs / boost.lhs,
        b.exp(),
        1e-12 * b.exp(),
        "renormalized moment ratio equals exp of the cross covariance".into(),
    ));
    report.checks.push(CheckOutcome::within(
        "decoupling-boost-baseline",
        boost.lhs,
        1.0,
        1e-14,
        "independent renormalized product has unit mean".into(),
    ));

    // Moment shift constants.
    report.checks.push(CheckOutcome::within(
        "shift-constant-ln2",
        shift_moment_factor(1.0, 2.0, std::f64::consts::LN_2),
        2.0,
        1e-15 * 2.0,
        "a ln 2 covariance shift doubles the second moment at gamma = 1".into(),
    ));
    report.checks.push(CheckOutcome::within(
        "shift-constant-fixed-points",
        shift_moment_factor(1.7, 1.0, 0.9).max(shift_moment_factor(1.7, 0.0, 0.9)),
        1.0,
        0.0,
        "orders 0 and 1 are exactly shift-invariant".into(),
    ));

    // Square-functional monotonicity under 100 seeded covariance bumps.
    let w = [1.0, 1.0];
    let fsq = ConvexFunctional::Power { p: 2.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut violations = 0u32;
    let mut min_slack = f64::INFINITY;
    for _ in 0..100 {
        let d0 = rng.gen_range(0.2f64..1.5);
        let d1 = rng.gen_range(0.2f64..1.5);
        let cap = (d0 * d1).sqrt();
        let c = rng.gen_range(-0.9 * cap..0.7 * cap);
        let bump = rng.gen_range(0.0..(0.2 * cap).max(1e-3));
        let lo = GaussianVectorSpec::new(2, vec![d0, c, c, d1])?;
        let hi = GaussianVectorSpec::new(2, vec![d0, c + bump, c + bump, d1])?;
        let r = kahane_verify(&lo, &hi, &w, fsq)?;
        min_slack = min_slack.min(r.slack + r.tolerance);
        if r.slack < -r.tolerance {
            violations += 1;
        }
    }
    report.checks.push(CheckOutcome::at_most(
        "square-monotonicity-violations",
        violations as f64,
        0.0,
        0.0,
        format!("min tolerated slack {min_slack} over 100 covariance bumps"),
    ));

    // Backend agreement on one closed-form case.
    let spec = GaussianVectorSpec::new(2, vec![0.5, 0.2, 0.2, 0.4])?;
    let wts = [0.7, 1.3];
    let (exact, _, _) = expected_convex_of_mass(&spec, &wts, fsq, MassBackend::ClosedForm)?;
    let (quad, qe, _) = expected_convex_of_mass(&spec, &wts, fsq, MassBackend::Quadrature)?;
    let (qmc, me, _) = expected_convex_of_mass(&spec, &wts, fsq, MassBackend::QuasiMc)?;
    let mut backends = Table::new("backends", &["backend", "value", "error_estimate"]);
    backends.push(vec!["closed-form".into(), fmt_f64(exact), fmt_f64(0.0)]);
    backends.push(vec!["quadrature".into(), fmt_f64(quad), fmt_f64(qe)]);
    backends.push(vec!["quasi-mc".into(), fmt_f64(qmc), fmt_f64(me)]);
    report.checks.push(CheckOutcome::at_most(
        "quadrature-agrees",
        (quad - exact).abs(),
        0.0,
        5.0 * qe.max(1e-12),
        "two-level quadrature against the closed form".into(),
    ));
    report.checks.push(CheckOutcome::at_most(
        "quasi-mc-agrees",
        (qmc - exact).abs(),
        0.0,
        5.0 * me,
        "quasi-random integration against the closed form".into(),
    ));
    report.tables.push(table);
    report.tables.push(backends);
    Ok(report)
}

/// Full experiment battery in acceptance order. The smoke profile keeps
/// every scenario and estimator path but shrinks grids and sample counts to
/// seconds, widening only the statistical fit tolerances; paired z-score
/// gates are scale-free and stay at 3 sigma.
pub fn run_full_suite(
    profile: Profile,
    seed: u64,
    workers: usize,
    cache_dir: Option<PathBuf>,
) -> Result<Vec<Report>, SuiteError> {
    let budget = |n_full: u64, n_smoke: u64, index: u64| {
        let n = match profile {
            Profile::Full => n_full,
            Profile::Smoke => n_smoke,
        };
        RunBudget {
            n_samples: n,
            seed: seed.wrapping_add(index),
            workers,
            cache_dir: cache_dir.clone(),
        }
    };
    let full = matches!(profile, Profile::Full);
    let mut reports = Vec::new();

    reports.push(exponent_algebra());
    reports.push(first_moment_checks()?);

    let a = UHPRect::new(-1.0, 1.0, 0.0, 1.0)?;
    let scaling_eps = if full { 0.5f64.powi(6) } else { 0.5f64.powi(4) };
    reports.push(scaling_check(&a, 0.5, 0.8, 1.0, scaling_eps, 2.0, &budget(20_000, 2_000, 2))?);

    let q = UHPRect::new(0.0, 0.25, 0.0, 0.25)?;
    let p_grid = [0.4, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75];
    let eps_list: Vec<f64> = if full {
        (5..=9).map(|k| 0.5f64.powi(k)).collect()
    } else {
        (4..=6).map(|k| 0.5f64.powi(k)).collect()
    };
    let (slope_tol, pc_tol) = if full { (0.1, 0.08) } else { (0.6, 0.35) };
    let mut scan = divergence_scan(
        &q,
        1.8,
        &p_grid,
        &eps_list,
        0.0,
        slope_tol,
        Some(pc_tol),
        &budget(100_000, 4_000, 3),
    )?;
    append_tail_diagnostics(
        &mut scan.report,
        &scan.finest_masses,
        1.8,
        None,
        if full { Some(0.15) } else { None },
    )?;
    reports.push(scan.report);

    reports.push(first_moment_dichotomy()?);

    let cross_eps = if full { 0.5f64.powi(6) } else { 0.5f64.powi(4) };
    reports.push(decorrelation_check(
        1.0,
        0.4,
        0.4,
        &[0.25, 0.125],
        cross_eps,
        0.0,
        &budget(20_000, 2_000, 5),
    )?);
    reports.push(box_moving_check(
        1.0,
        0.4,
        0.4,
        1.0,
        cross_eps,
        0.0,
        0.3,
        &budget(20_000, 2_000, 6),
    )?);

    reports.push(elementary_fuzz(if full { 100_000 } else { 10_000 }, seed));
    reports.push(gaussian_comparison_checks()?);

    let slice_levels = if full { 6 } else { 4 };
    reports.push(slice_moment_sequence(
        0.5,
        slice_levels,
        0.5,
        1.0,
        0.0,
        &budget(20_000, 2_000, 9),
    )?);
    Ok(reports)
}
