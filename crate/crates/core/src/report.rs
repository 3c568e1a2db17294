//! Verification records, the human/JSON report files, and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// How a check's value is compared against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// Pass iff `value <= tolerance` (residuals, drifts).
    AtMost,
    /// Pass iff `value >= -tolerance` (margins).
    MarginAtLeast,
    /// Pass iff `value > tolerance` (negative controls that must show an effect).
    Exceeds,
    /// Recorded for context; never affects the verdict.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, relation: Relation) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= tolerance,
            Relation::MarginAtLeast => value >= -tolerance,
            Relation::Exceeds => value > tolerance,
            Relation::Info => true,
        };
        CheckRecord {
            name: name.into(),
            value,
            tolerance,
            relation,
            passed,
            note: None,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Relation::AtMost)
    }

    pub fn margin(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Relation::MarginAtLeast)
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, 0.0, Relation::Info)
    }

    /// A boolean condition, recorded as value 1 (true) or 0 (false).
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        let mut r = Self::new(name, if ok { 1.0 } else { 0.0 }, 0.5, Relation::Exceeds);
        r.passed = ok;
        r
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<CheckRecord>,
    pub notes: Vec<String>,
    pub wall_clock_s: f64,
    pub version: String,
}

impl ScenarioReport {
    pub fn new(scenario: impl Into<String>) -> Self {
        ScenarioReport {
            scenario: scenario.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn extend(&mut self, other: ScenarioReport) {
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
    }

    /// Conjunction of the verdict-bearing checks.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `key: value` text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "version: {}", self.version);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}: {v}");
        }
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::MarginAtLeast => ">= -",
                Relation::Exceeds => ">",
                Relation::Info => "",
            };
            let verdict = match (c.relation, c.passed) {
                (Relation::Info, _) => "INFO",
                (_, true) => "PASS",
                (_, false) => "FAIL",
            };
            if c.relation == Relation::Info {
                let _ = write!(s, "check.{}: {} value={:.6e}", c.name, verdict, c.value);
            } else {
                let _ = write!(
                    s,
                    "check.{}: {} value={:.6e} tol{}{:.1e}",
                    c.name, verdict, c.value, rel, c.tolerance
                );
            }
            if let Some(n) = &c.note {
                let _ = write!(s, " ({n})");
            }
            s.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "wall_clock_s: {:.3}", self.wall_clock_s);
        let _ = writeln!(
            s,
            "verdict: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["verdict"] = serde_json::Value::from(if self.passed() { "pass" } else { "fail" });
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

/// A CSV table: header plus rows of reals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated, LF line endings, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_is_conjunction() {
        let mut r = ScenarioReport::new("t");
        r.push(CheckRecord::at_most("a", 1e-9, 1e-8));
        r.push(CheckRecord::info("b", 3.0));
        assert!(r.passed());
        r.push(CheckRecord::margin("c", -1e-3, 1e-6));
        assert!(!r.passed());
        assert_eq!(r.failed_checks()[0].name, "c");
        assert!(r.to_text().contains("check.c: FAIL"));
        assert!(r.to_json().contains("\"verdict\": \"fail\""));
    }

    #[test]
    fn csv_digits() {
        let mut t = Table::new(["t", "x"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        let csv = t.to_csv();
        assert_eq!(csv, "t,x\n1.0000000000000001e-1,3.3333333333333331e-1\n");
        let back: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
