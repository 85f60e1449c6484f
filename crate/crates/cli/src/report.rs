//! Report and series output.
//!
//! Reports are plain JSON with a fixed field order; the only
//! run-to-run varying field is `timestamp`, so byte comparisons after
//! stripping it are meaningful. Tables double as CSV series.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// One measured quantity against its bound. `sense` records which way the
/// comparison goes: "le" passes when measured <= tolerance, "ge" when
/// measured >= tolerance (coverage fractions, convergence orders).
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub sense: String,
    pub pass: bool,
}

impl CheckRecord {
    pub fn le(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            measured: sanitize(measured),
            tolerance,
            sense: "le".into(),
            pass: measured <= tolerance,
        }
    }

    pub fn ge(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            measured: sanitize(measured),
            tolerance,
            sense: "ge".into(),
            pass: measured >= tolerance,
        }
    }

    /// Strict upper bound, for contraction ratios where equality means
    /// stagnation rather than success.
    pub fn lt(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            measured: sanitize(measured),
            tolerance,
            sense: "lt".into(),
            pass: measured < tolerance,
        }
    }
}

/// JSON cannot carry non-finite floats; clamp them to the representable
/// extremes so a diverged measurement still reports (and fails) cleanly.
fn sanitize(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else if x.is_infinite() {
        f64::MAX.copysign(x)
    } else {
        x
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.into_iter().map(sanitize).collect());
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub kind: String,
    pub seed: u64,
    /// Seconds since the epoch; the one nondeterministic field.
    pub timestamp: u64,
    pub scenario: serde_json::Value,
    pub checks: Vec<CheckRecord>,
    pub tables: Vec<Table>,
    pub pass: bool,
}

impl Report {
    pub fn new(
        kind: &str,
        seed: u64,
        scenario: serde_json::Value,
        checks: Vec<CheckRecord>,
        tables: Vec<Table>,
    ) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Report {
            kind: kind.into(),
            seed,
            timestamp: now(),
            scenario,
            checks,
            tables,
            pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteEntry {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub timestamp: u64,
    pub scenario_count: usize,
    pub check_count: usize,
    pub entries: Vec<SuiteEntry>,
    pub pass: bool,
}

pub fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

/// Write the report JSON to `out` and each table as `<stem>.<table>.csv`
/// next to it.
pub fn write_report(report: &Report, out: &Path) -> Result<(), CliError> {
    std::fs::write(out, to_json(report))
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string();
    for table in &report.tables {
        let csv_name = format!("{stem}.{}.csv", table.name);
        let path = out.with_file_name(csv_name);
        write_csv(table, &path)?;
    }
    Ok(())
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", table.columns.join(",")).expect("vec write");
    for row in &table.rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(buf, "{}", line.join(",")).expect("vec write");
    }
    std::fs::write(path, buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_the_conjunction_of_checks() {
        let ok = CheckRecord::le("a", 1e-12, 1e-10);
        let bad = CheckRecord::le("b", 1e-8, 1e-10);
        assert!(ok.pass && !bad.pass);
        let r = Report::new("shell", 0, serde_json::Value::Null, vec![ok.clone()], vec![]);
        assert!(r.pass);
        let r = Report::new("shell", 0, serde_json::Value::Null, vec![ok, bad], vec![]);
        assert!(!r.pass);
    }

    #[test]
    fn ge_sense_checks_lower_bounds() {
        assert!(CheckRecord::ge("order", 2.1, 1.8).pass);
        assert!(!CheckRecord::ge("order", 1.2, 1.8).pass);
    }

    #[test]
    fn non_finite_measurements_serialize_and_fail() {
        let c = CheckRecord::le("diverged", f64::NAN, 1e-10);
        assert!(!c.pass);
        let text = serde_json::to_string(&c).unwrap();
        assert!(!text.contains("null"), "{text}");
    }

    #[test]
    fn csv_round_trip_shape() {
        let mut t = Table::new("conv", &["n", "defect"]);
        t.push(vec![64.0, 1e-3]);
        t.push(vec![128.0, 2.5e-4]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conv.csv");
        write_csv(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("n,defect\n"));
    }
}
