//! Experiment reports: named CSV tables plus pass/fail checks, written to
//! `out/<experiment>/` as `*.csv` files and a `summary.json`.
//!
//! CSV cells are formatted with the shortest round-trip float representation,
//! so identical inputs produce byte-identical files; the JSON summary also
//! carries wall time, which varies between runs by design.

use serde::Serialize;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// One named CSV table.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row shape in {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// One asserted quantity with its tolerance and outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    /// Two-sided check: `|observed - expected| <= tolerance`.
    pub fn within(name: &str, observed: f64, expected: f64, tolerance: f64, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            observed,
            expected,
            tolerance,
            passed: (observed - expected).abs() <= tolerance,
            detail,
        }
    }

    /// One-sided check: `observed <= bound + tolerance`.
    pub fn at_most(name: &str, observed: f64, bound: f64, tolerance: f64, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            observed,
            expected: bound,
            tolerance,
            passed: observed <= bound + tolerance,
            detail,
        }
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    pub checks: Vec<CheckOutcome>,
}

impl Report {
    pub fn new(experiment: &str, config: serde_json::Value) -> Report {
        Report { experiment: experiment.to_string(), config, tables: Vec::new(), checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Shortest round-trip representation; the one float format used in CSVs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    wall_seconds: f64,
    passed: bool,
    config: &'a serde_json::Value,
    checks: &'a [CheckOutcome],
    tables: Vec<String>,
}

/// Writes `<out_root>/<experiment>/summary.json` and one CSV per table.
/// Returns the experiment directory.
pub fn write_report(
    out_root: &Path,
    report: &Report,
    version: &str,
    seed: u64,
    wall: Duration,
) -> std::io::Result<PathBuf> {
    let dir = out_root.join(&report.experiment);
    std::fs::create_dir_all(&dir)?;
    for table in &report.tables {
        let mut f = std::fs::File::create(dir.join(format!("{}.csv", table.name)))?;
        f.write_all(table.to_csv().as_bytes())?;
    }
    let summary = Summary {
        experiment: &report.experiment,
        version,
        seed,
        wall_seconds: wall.as_secs_f64(),
        passed: report.passed(),
        config: &report.config,
        checks: &report.checks,
        tables: report.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
    };
    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    f.write_all(serde_json::to_string_pretty(&summary)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting_is_stable_and_roundtrips_floats() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(4.0), "4");
        for v in [0.3897148351421214f64, -1.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn report_lands_on_disk_with_summary_and_tables() {
        let tmp = tempfile::tempdir().unwrap();
        let mut report = Report::new("demo", serde_json::json!({"gamma": 1.0}));
        let mut t = Table::new("values", &["x", "y"]);
        t.push(vec![fmt_f64(1.0), fmt_f64(0.5)]);
        report.tables.push(t);
        report.checks.push(CheckOutcome::within("unit", 1.0, 1.0, 0.0, String::new()));
        let dir = write_report(tmp.path(), &report, "test-version", 7, Duration::ZERO).unwrap();
        let csv = std::fs::read_to_string(dir.join("values.csv")).unwrap();
        assert_eq!(csv, "x,y\n1,0.5\n");
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(json["passed"], serde_json::json!(true));
        assert_eq!(json["seed"], serde_json::json!(7));
        assert_eq!(json["config"]["gamma"], serde_json::json!(1.0));
    }

    #[test]
    fn failed_checks_flip_the_report_outcome() {
        let mut report = Report::new("demo", serde_json::Value::Null);
        report.checks.push(CheckOutcome::at_most("bound", 2.0, 1.0, 0.5, String::new()));
        assert!(!report.passed());
        assert!(CheckOutcome::at_most("bound", 1.4, 1.0, 0.5, String::new()).passed);
    }
}
