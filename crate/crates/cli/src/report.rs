//! Scenario results and their serialized forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;

/// A summary scalar with the verdict of its contract.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub criterion: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(value: f64, bound: f64) -> Self {
        Self {
            value,
            criterion: format!("<= {}", short(bound)),
            pass: value <= bound,
        }
    }

    pub fn less_than(value: f64, bound: f64) -> Self {
        Self {
            value,
            criterion: format!("< {}", short(bound)),
            pass: value < bound,
        }
    }

    pub fn at_least(value: f64, bound: f64) -> Self {
        Self {
            value,
            criterion: format!(">= {}", short(bound)),
            pass: value >= bound,
        }
    }

    pub fn greater_than(value: f64, bound: f64) -> Self {
        Self {
            value,
            criterion: format!("> {}", short(bound)),
            pass: value > bound,
        }
    }

    pub fn within(value: f64, target: f64, tol: f64) -> Self {
        Self {
            value,
            criterion: format!("= {} +- {}", short(target), short(tol)),
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn count(value: usize, expected: usize) -> Self {
        Self {
            value: value as f64,
            criterion: format!("= {expected}"),
            pass: value == expected,
        }
    }

    /// A boolean property, reported as 1 or 0.
    pub fn holds(ok: bool) -> Self {
        Self {
            value: if ok { 1.0 } else { 0.0 },
            criterion: "= 1".into(),
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_sig(*v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: String,
    pub summary: BTreeMap<String, Check>,
    pub tables: Vec<Table>,
}

impl ScenarioResult {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            summary: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, check: Check) {
        self.summary.insert(name.into(), check);
    }

    pub fn pass(&self) -> bool {
        self.summary.values().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.summary
            .iter()
            .filter(|(_, c)| !c.pass)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn summary_json(&self, config: &ScenarioConfig) -> Value {
        let summary: serde_json::Map<String, Value> = self
            .summary
            .iter()
            .map(|(k, c)| {
                let v = serde_json::json!({
                    "value": finite_or_null(c.value),
                    "criterion": c.criterion,
                    "pass": c.pass,
                });
                (k.clone(), v)
            })
            .collect();
        serde_json::json!({
            "scenario": self.scenario,
            "pass": self.pass(),
            "summary": summary,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "provenance": {
                "tool": "emergence",
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
            },
        })
    }
}

/// Compact form for thresholds quoted in criteria.
fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn finite_or_null(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Decimal notation with 12 significant digits.
pub fn format_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit; one digit too many is harmless
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" { "0".into() } else { s }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonSummary,
}

/// Writes the result into `dir`; each file is written to a temporary sibling
/// and renamed into place.
pub fn emit(
    result: &ScenarioResult,
    config: &ScenarioConfig,
    format: Format,
    dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            for t in &result.tables {
                let path = dir.join(format!("{}.csv", t.name));
                write_atomic(&path, t.to_csv().as_bytes())?;
                written.push(path);
            }
        }
        Format::JsonSummary => {
            let path = dir.join("summary.json");
            let mut text = serde_json::to_string_pretty(&result.summary_json(config))
                .map_err(std::io::Error::other)?;
            text.push('\n');
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
