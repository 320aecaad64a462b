use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Pass condition attached to a measured quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    /// Strictly above `limit`.
    Above { limit: f64 },
    Within { lo: f64, hi: f64 },
    /// Reported only.
    None,
}

impl Threshold {
    pub fn check(&self, v: f64) -> Option<bool> {
        let ok = match *self {
            Threshold::AtMost { limit } => v <= limit,
            Threshold::AtLeast { limit } => v >= limit,
            Threshold::Above { limit } => v > limit,
            Threshold::Within { lo, hi } => (lo..=hi).contains(&v),
            Threshold::None => return None,
        };
        Some(ok && !v.is_nan())
    }

    fn describe(&self) -> String {
        match *self {
            Threshold::AtMost { limit } => format!("<= {limit:e}"),
            Threshold::AtLeast { limit } => format!(">= {limit}"),
            Threshold::Above { limit } => format!("> {limit:e}"),
            Threshold::Within { lo, hi } => format!("in [{lo}, {hi}]"),
            Threshold::None => "-".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub threshold: Threshold,
    /// Where the reference value or threshold comes from.
    pub provenance: String,
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub id: String,
    pub config: serde_json::Value,
    pub measurements: Vec<Measurement>,
    /// Free-form rows, e.g. a per-arm accuracy table or a training curve.
    pub rows: Vec<BTreeMap<String, serde_json::Value>>,
    pub passed: bool,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn new(id: impl Into<String>, config: serde_json::Value) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            id: id.into(),
            config,
            measurements: Vec::new(),
            rows: Vec::new(),
            passed: true,
            wall_seconds: 0.0,
        }
    }

    pub fn measure(&mut self, name: &str, value: f64, unit: &str, threshold: Threshold, provenance: &str) -> bool {
        let passed = threshold.check(value);
        if passed == Some(false) {
            self.passed = false;
        }
        self.measurements.push(Measurement {
            name: name.into(),
            value,
            unit: unit.into(),
            threshold,
            provenance: provenance.into(),
            passed,
        });
        passed.unwrap_or(true)
    }

    pub fn row(&mut self, row: serde_json::Value) {
        if let serde_json::Value::Object(m) = row {
            self.rows.push(m.into_iter().collect());
        }
    }

    pub fn finish(mut self, started: Instant) -> Self {
        self.wall_seconds = started.elapsed().as_secs_f64();
        self.passed = self.measurements.iter().all(|m| m.passed != Some(false));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| m.passed == Some(false))
    }

    /// Merge another report's measurements under `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: ExperimentReport) {
        for mut m in other.measurements {
            m.name = format!("{prefix}.{}", m.name);
            if m.passed == Some(false) {
                self.passed = false;
            }
            self.measurements.push(m);
        }
        self.rows.extend(other.rows);
    }

    /// Human-readable summary, one line per measurement.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} [{}] {:.1}s\n",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.wall_seconds
        );
        for m in &self.measurements {
            let tag = match m.passed {
                Some(true) => "ok  ",
                Some(false) => "FAIL",
                None => "    ",
            };
            let _ = writeln!(
                s,
                "  {tag} {:<40} {:>14.6e} {:<8} {}",
                m.name,
                m.value,
                m.unit,
                m.threshold.describe()
            );
        }
        s
    }

    /// Write `<id>.json` (full report) and `<id>.csv` (measurements) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{}.json", self.id));
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{}.csv", self.id));
        let mut text = String::from("name,value,unit,threshold,passed,provenance\n");
        for m in &self.measurements {
            let passed = m.passed.map_or(String::new(), |p| p.to_string());
            let _ = writeln!(
                text,
                "{},{},{},{},{},\"{}\"",
                m.name,
                m.value,
                m.unit,
                m.threshold.describe(),
                passed,
                m.provenance.replace('"', "'")
            );
        }
        std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
        if !self.rows.is_empty() {
            let rows = dir.join(format!("{}_rows.csv", self.id));
            std::fs::write(&rows, rows_csv(&self.rows)).map_err(|e| Error::io(&rows, e))?;
        }
        Ok((json, csv))
    }
}

fn rows_csv(rows: &[BTreeMap<String, serde_json::Value>]) -> String {
    let mut keys: Vec<&String> = Vec::new();
    for r in rows {
        for k in r.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut s = keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = keys
            .iter()
            .map(|k| match r.get(*k) {
                Some(serde_json::Value::String(v)) => v.clone(),
                Some(serde_json::Value::Null) | None => String::new(),
                Some(v) => v.to_string(),
            })
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(Threshold::AtMost { limit: 1.0 }.check(1.0), Some(true));
        assert_eq!(Threshold::Above { limit: 1.0 }.check(1.0), Some(false));
        assert_eq!(Threshold::Within { lo: 0.4, hi: 0.6 }.check(0.61), Some(false));
        assert_eq!(Threshold::AtLeast { limit: 0.0 }.check(f64::NAN), Some(false));
        assert_eq!(Threshold::None.check(3.0), None);
    }

    #[test]
    fn failing_measurement_fails_report() {
        let mut r = ExperimentReport::new("x", serde_json::json!({}));
        r.measure("a", 1.0, "", Threshold::AtMost { limit: 2.0 }, "test");
        assert!(r.passed);
        r.measure("b", 3.0, "", Threshold::AtMost { limit: 2.0 }, "test");
        let r = r.finish(Instant::now());
        assert!(!r.passed);
        assert_eq!(r.failures().count(), 1);
    }
}
