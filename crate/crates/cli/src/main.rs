//! Command-line driver for the experiment suite. Every subcommand runs one
//! scenario from `gmclab_core::suite`, writes
//! `<out>/<experiment>/summary.json` plus one CSV per table, prints one
//! status line per experiment, and exits 0 when every check passed, 1 when
//! a check failed, and 2 when the run could not be configured.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gmclab_core::geometry::{CarlesonCube, UHPRect};
use gmclab_core::report::{write_report, Report};
use gmclab_core::suite::{self, tail_report, Profile, RunBudget};
use serde::Deserialize;
use std::path::PathBuf;
use std::time::Instant;

const VERSION: &str = concat!("gmclab-", env!("CARGO_PKG_VERSION"));

const CSV_NOTES: &str = "\
Output layout:
  <out>/<experiment>/summary.json   run config, checks, pass/fail, wall time
  <out>/<experiment>/<table>.csv    one CSV per result table

Common CSV columns:
  epsilon, p                       cutoff scale and moment order of a row
  mean, stderr, log_mean           moment estimate, its standard error, ln(mean)
  n_samples, method                replicate count and estimator (mean or
                                   median-of-means for heavy orders)
  slope, slope_se, theory          fitted log-log growth rate vs prediction
  k, alpha, ci_lo, ci_hi           Hill tail size, index estimate, 95% CI

Runs are deterministic: the same seed gives byte-identical CSVs for any
worker count. Set GMC_LAB_CACHE to a directory to reuse covariance
factorizations across runs.";

#[derive(Parser)]
#[command(name = "gmclab", version, about = "Numerical laboratory for a boundary multiplicative chaos measure", after_long_help = CSV_NOTES)]
struct Cli {
    /// TOML file with parameter defaults; explicit flags always win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root directory for experiment outputs [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base RNG seed; every replicate derives from (seed, replicate id)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sampling threads; the results are identical for any worker count
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Monte Carlo replicates per estimate
    #[arg(long, global = true)]
    samples: Option<u64>,

    /// Chaos parameter, in (0, 2)
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Region: "a,b" for the box [a,b] x [0, b-a], or "x0,x1,y0,y1"
    #[arg(long, global = true, value_name = "COORDS", allow_hyphen_values = true)]
    region: Option<String>,

    /// Cutoff scale (grid cell size)
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Constant shift added to every covariance entry
    #[arg(long, global = true, value_name = "LAMBDA", allow_hyphen_values = true)]
    lambda_shift: Option<f64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Deterministic first-moment checks: closed-form battery, or a survey
    /// over an epsilon ladder when --gamma is given
    FirstMoment {
        /// Epsilon ladder for the survey, finest last
        #[arg(long, value_delimiter = ',', value_name = "E1,E2,...")]
        epsilon_list: Option<Vec<f64>>,
    },
    /// Moment ratio between a region and its rescaled copy vs r^zeta_bar(p)
    Scaling {
        /// Scale factor applied to the region and the cutoff
        #[arg(long)]
        r: Option<f64>,
        /// Moment order; must stay 0.1 below the threshold 2/gamma^2
        #[arg(long)]
        p: Option<f64>,
    },
    /// Moment growth exponents over an epsilon ladder, with threshold
    /// localization when the order grid straddles 2/gamma^2
    Scan {
        /// Moment orders to scan
        #[arg(long, value_delimiter = ',', value_name = "P1,P2,...")]
        p_grid: Option<Vec<f64>>,
        /// Halving epsilon ladder, coarsest first
        #[arg(long, value_delimiter = ',', value_name = "E1,E2,...")]
        epsilon_list: Option<Vec<f64>>,
        /// Tolerance on each fitted slope vs max(0, 1 - zeta_bar(p))
        #[arg(long)]
        slope_tol: Option<f64>,
        /// Tolerance on the localized threshold vs 2/gamma^2
        #[arg(long)]
        pc_tol: Option<f64>,
        /// Skip the threshold localization check
        #[arg(long)]
        no_threshold: bool,
    },
    /// Per-level moment estimates on dyadic horizontal slices, with exact
    /// deterministic level-ratio checks
    Slices {
        /// Half-width of the slice stack
        #[arg(long)]
        r: Option<f64>,
        /// Number of dyadic levels
        #[arg(long)]
        levels: Option<u32>,
        /// Moment order of the per-level estimates
        #[arg(long)]
        p: Option<f64>,
    },
    /// Hill tail-index diagnostics of the mass distribution vs 2/gamma^2
    Tail {
        /// Tail size override for the Hill estimator
        #[arg(long)]
        hill_k: Option<usize>,
        /// Tolerance on the tail index vs 2/gamma^2; omit to skip the check
        #[arg(long)]
        alpha_tol: Option<f64>,
        /// Emit the tail table only, without index checks
        #[arg(long)]
        no_alpha_check: bool,
    },
    /// Coupled cross-moment experiments on split boxes
    Cross {
        /// Which cross-moment scenario to run
        #[arg(long, value_enum)]
        mode: Option<CrossMode>,
        /// Gap widths between the boxes (decorrelation mode)
        #[arg(long, value_delimiter = ',', value_name = "D1,D2,...")]
        delta: Option<Vec<f64>>,
        /// Moment order on the left box
        #[arg(long)]
        k: Option<f64>,
        /// Moment order on the right box
        #[arg(long)]
        q: Option<f64>,
    },
    /// Randomized checks of the elementary moment inequalities and the
    /// Gaussian comparison principles
    Ineq {
        /// Random cases per elementary proposition
        #[arg(long)]
        cases: Option<u64>,
    },
    /// The whole experiment battery in a fixed order
    All {
        /// full: headline scale (tens of minutes); smoke: seconds
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CrossMode {
    Decorrelation,
    BoxMoving,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Full,
    Smoke,
}

/// Optional parameter defaults loaded from --config. Flags win over these;
/// these win over the built-in defaults.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    gamma: Option<f64>,
    p: Option<f64>,
    p_grid: Option<Vec<f64>>,
    region: Option<String>,
    epsilon: Option<f64>,
    epsilon_list: Option<Vec<f64>>,
    samples: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    lambda_shift: Option<f64>,
    r: Option<f64>,
    levels: Option<u32>,
    delta: Option<Vec<f64>>,
    k: Option<f64>,
    q: Option<f64>,
    cases: Option<u64>,
    profile: Option<String>,
    hill_k: Option<usize>,
    alpha_tol: Option<f64>,
    slope_tol: Option<f64>,
    pc_tol: Option<f64>,
    mode: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", p.display()))
            }
        }
    }
}

/// "a,b" is the box [a,b] x [0, b-a]; "x0,x1,y0,y1" is a raw rectangle.
fn parse_region(text: &str) -> Result<UHPRect> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("region {text:?} has a non-numeric coordinate"))?;
    let rect = match parts.as_slice() {
        [a, b] => CarlesonCube::new(*a, *b)?.rect(),
        [x0, x1, y0, y1] => UHPRect::new(*x0, *x1, *y0, *y1)?,
        _ => bail!("region {text:?} needs 2 coordinates (a,b) or 4 (x0,x1,y0,y1)"),
    };
    Ok(rect)
}

struct Resolved {
    out: PathBuf,
    seed: u64,
    workers: usize,
    samples: Option<u64>,
    gamma: Option<f64>,
    region: Option<UHPRect>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
    file: FileConfig,
}

impl Resolved {
    fn budget(&self, default_samples: u64, seed_offset: u64) -> RunBudget {
        RunBudget {
            n_samples: self.samples.unwrap_or(default_samples),
            seed: self.seed.wrapping_add(seed_offset),
            workers: self.workers,
            cache_dir: std::env::var_os("GMC_LAB_CACHE").map(PathBuf::from),
        }
    }
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let file = FileConfig::load(cli.config.as_ref())?;
    let region = match cli.region.as_ref().or(file.region.as_ref()) {
        Some(text) => Some(parse_region(text)?),
        None => None,
    };
    Ok(Resolved {
        out: cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(42),
        workers: cli.workers.or(file.workers).unwrap_or(1),
        samples: cli.samples.or(file.samples),
        gamma: cli.gamma.or(file.gamma),
        region,
        epsilon: cli.epsilon.or(file.epsilon),
        lambda: cli.lambda_shift.or(file.lambda_shift),
        file,
    })
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let rez = resolve(cli)?;
    let started = Instant::now();
    let reports: Vec<Report> = match &cli.cmd {
        Cmd::FirstMoment { epsilon_list } => {
            let report = match rez.gamma {
                None => suite::first_moment_checks()?,
                Some(gamma) => {
                    let region = rez
                        .region
                        .unwrap_or(UHPRect::new(-1.0, 1.0, 0.0, 1.0).expect("static region"));
                    let eps = epsilon_list
                        .clone()
                        .or_else(|| rez.file.epsilon_list.clone())
                        .unwrap_or_else(|| (4..=10).map(|k| 0.5f64.powi(k)).collect());
                    suite::first_moment_survey(&region, gamma, &eps)?
                }
            };
            vec![report]
        }
        Cmd::Scaling { r, p } => {
            let region =
                rez.region.unwrap_or(UHPRect::new(-1.0, 1.0, 0.0, 1.0).expect("static region"));
            vec![suite::scaling_check(
                &region,
                r.or(rez.file.r).unwrap_or(0.5),
                p.or(rez.file.p).unwrap_or(0.8),
                rez.gamma.unwrap_or(1.0),
                rez.epsilon.unwrap_or(0.5f64.powi(6)),
                rez.lambda.unwrap_or(2.0),
                &rez.budget(20_000, 2),
            )?]
        }
        Cmd::Scan { p_grid, epsilon_list, slope_tol, pc_tol, no_threshold } => {
            let region =
                rez.region.unwrap_or(UHPRect::new(0.0, 0.25, 0.0, 0.25).expect("static region"));
            let grid = p_grid
                .clone()
                .or_else(|| rez.file.p_grid.clone())
                .unwrap_or_else(|| vec![0.4, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75]);
            let eps = epsilon_list
                .clone()
                .or_else(|| rez.file.epsilon_list.clone())
                .unwrap_or_else(|| (5..=9).map(|k| 0.5f64.powi(k)).collect());
            let pc_tol = if *no_threshold {
                None
            } else {
                Some(pc_tol.or(rez.file.pc_tol).unwrap_or(0.08))
            };
            let out = suite::divergence_scan(
                &region,
                rez.gamma.unwrap_or(1.8),
                &grid,
                &eps,
                rez.lambda.unwrap_or(0.0),
                slope_tol.or(rez.file.slope_tol).unwrap_or(0.1),
                pc_tol,
                &rez.budget(100_000, 3),
            )?;
            vec![out.report]
        }
        Cmd::Slices { r, levels, p } => {
            vec![suite::slice_moment_sequence(
                r.or(rez.file.r).unwrap_or(0.5),
                levels.or(rez.file.levels).unwrap_or(6),
                p.or(rez.file.p).unwrap_or(0.5),
                rez.gamma.unwrap_or(1.0),
                rez.lambda.unwrap_or(0.0),
                &rez.budget(20_000, 9),
            )?]
        }
        Cmd::Tail { hill_k, alpha_tol, no_alpha_check } => {
            let region =
                rez.region.unwrap_or(UHPRect::new(0.0, 0.25, 0.0, 0.25).expect("static region"));
            let alpha_tol = if *no_alpha_check {
                None
            } else {
                Some(alpha_tol.or(rez.file.alpha_tol).unwrap_or(0.15))
            };
            vec![tail_report(
                &region,
                rez.gamma.unwrap_or(1.8),
                rez.epsilon.unwrap_or(0.5f64.powi(9)),
                rez.lambda.unwrap_or(0.0),
                hill_k.or(rez.file.hill_k),
                alpha_tol,
                &rez.budget(100_000, 3),
            )?]
        }
        Cmd::Cross { mode, delta, k, q } => {
            let mode = match (mode, rez.file.mode.as_deref()) {
                (Some(m), _) => *m,
                (None, Some("decorrelation")) => CrossMode::Decorrelation,
                (None, Some("box-moving")) => CrossMode::BoxMoving,
                (None, Some(other)) => {
                    bail!("mode {other:?} must be \"decorrelation\" or \"box-moving\"")
                }
                (None, None) => CrossMode::Decorrelation,
            };
            let gamma = rez.gamma.unwrap_or(1.0);
            let k = k.or(rez.file.k).unwrap_or(0.4);
            let q = q.or(rez.file.q).unwrap_or(0.4);
            let epsilon = rez.epsilon.unwrap_or(0.5f64.powi(6));
            let lambda = rez.lambda.unwrap_or(0.0);
            let report = match mode {
                CrossMode::Decorrelation => {
                    let deltas = delta
                        .clone()
                        .or_else(|| rez.file.delta.clone())
                        .unwrap_or_else(|| vec![0.25, 0.125]);
                    suite::decorrelation_check(
                        gamma,
                        k,
                        q,
                        &deltas,
                        epsilon,
                        lambda,
                        &rez.budget(20_000, 5),
                    )?
                }
                CrossMode::BoxMoving => suite::box_moving_check(
                    gamma,
                    k,
                    q,
                    1.0,
                    epsilon,
                    lambda,
                    0.3,
                    &rez.budget(20_000, 6),
                )?,
            };
            vec![report]
        }
        Cmd::Ineq { cases } => {
            let cases = cases.or(rez.file.cases).unwrap_or(100_000);
            vec![suite::elementary_fuzz(cases, rez.seed), suite::gaussian_comparison_checks()?]
        }
        Cmd::All { profile } => {
            let profile = match (profile, rez.file.profile.as_deref()) {
                (Some(ProfileArg::Full), _) | (None, Some("full")) | (None, None) => Profile::Full,
                (Some(ProfileArg::Smoke), _) | (None, Some("smoke")) => Profile::Smoke,
                (None, Some(other)) => bail!("profile {other:?} must be \"full\" or \"smoke\""),
            };
            let cache = std::env::var_os("GMC_LAB_CACHE").map(PathBuf::from);
            suite::run_full_suite(profile, rez.seed, rez.workers, cache)?
        }
    };

    let mut all_passed = true;
    for report in &reports {
        let wall = started.elapsed();
        let dir = write_report(&rez.out, report, VERSION, rez.seed, wall)
            .with_context(|| format!("writing report to {}", rez.out.display()))?;
        let passed = report.passed();
        all_passed &= passed;
        let n = report.checks.len();
        println!(
            "{}: {} ({} checks) -> {}",
            report.experiment,
            if passed { "PASS" } else { "FAIL" },
            n,
            dir.display()
        );
        for check in report.checks.iter().filter(|c| !c.passed) {
            println!(
                "  failed {}: observed {} vs {} +- {} ({})",
                check.name, check.observed, check.expected, check.tolerance, check.detail
            );
        }
    }
    Ok(all_passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_strings_parse_both_forms() {
        let boundary = parse_region("-1,1").unwrap();
        assert_eq!(
            (boundary.x0, boundary.x1, boundary.y0, boundary.y1),
            (-1.0, 1.0, 0.0, 2.0)
        );
        let rect = parse_region("0, 0.25, 0, 0.25").unwrap();
        assert_eq!((rect.x0, rect.x1, rect.y0, rect.y1), (0.0, 0.25, 0.0, 0.25));
        assert!(parse_region("1").is_err());
        assert!(parse_region("0,1,2").is_err());
        assert!(parse_region("a,b").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys_and_reads_known_ones() {
        assert!(toml::from_str::<FileConfig>("gamma = 1.0\nunknown = 2\n").is_err());
        let ok: FileConfig = toml::from_str("gamma = 1.5\nsamples = 10\n").unwrap();
        assert_eq!(ok.gamma, Some(1.5));
        assert_eq!(ok.samples, Some(10));
    }

    #[test]
    fn cli_parses_a_representative_command_line() {
        use clap::Parser;
        let cli = Cli::parse_from([
            "gmclab", "scan", "--gamma", "1.8", "--p-grid", "0.4,0.5", "--epsilon-list",
            "0.25,0.125", "--seed", "7", "--workers", "8", "--region", "-1,1",
            "--lambda-shift", "-0.5",
        ]);
        assert_eq!(cli.gamma, Some(1.8));
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.workers, Some(8));
        // Leading hyphens in values must parse as values, not flags.
        assert_eq!(cli.region.as_deref(), Some("-1,1"));
        assert_eq!(cli.lambda_shift, Some(-0.5));
        match cli.cmd {
            Cmd::Scan { p_grid, epsilon_list, .. } => {
                assert_eq!(p_grid, Some(vec![0.4, 0.5]));
                assert_eq!(epsilon_list, Some(vec![0.25, 0.125]));
            }
            _ => panic!("expected the scan subcommand"),
        }
    }
}
