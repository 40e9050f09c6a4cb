//! JSON reports and CSV series.
//!
//! Every report embeds [`SCHEMA_VERSION`]. Top-level fields:
//!
//! | field | type |
//! |---|---|
//! | `schema_version` | `"hymlab.report/1"` |
//! | `scenario` | scenario name |
//! | `config` | effective `key = value` pairs, sorted by key |
//! | `passed` | `true` iff every assertion passed |
//! | `assertions` | list of `{name, passed, value, threshold, detail}` |
//! | `results` | scenario-specific object |
//!
//! Reports contain no timestamps, so equal configs give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const SCHEMA_VERSION: &str = "hymlab.report/1";

pub const RAY_CSV: &str = "ray_energy.csv";
pub const RAY_HEADER: &str = "t,m_direct,m_closed,residual";
pub const FLOW_CSV: &str = "flow.csv";
pub const FLOW_HEADER: &str = "step,time,he_residual,m_value";

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Assertion {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: format!("{value:e} <= {threshold:e}"),
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value >= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: format!("{value:e} >= {threshold:e}"),
        }
    }

    pub fn check(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            value: None,
            threshold: None,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub scenario: String,
    pub config: BTreeMap<String, String>,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub results: serde_json::Value,
}

impl Report {
    pub fn new(
        scenario: &str,
        config: BTreeMap<String, String>,
        assertions: Vec<Assertion>,
        results: serde_json::Value,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            config,
            passed: assertions.iter().all(|a| a.passed),
            assertions,
            results,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

/// A CSV series to write next to the report.
#[derive(Clone, Debug)]
pub struct Series {
    pub file: &'static str,
    pub header: &'static str,
    pub body: String,
}

impl Series {
    /// `csv` is a full CSV text whose first line must equal `header`.
    pub fn from_csv(file: &'static str, header: &'static str, csv: &str) -> Self {
        let body = csv.strip_prefix(header).unwrap_or(csv).trim_start_matches('\n').to_string();
        Self { file, header, body }
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header, self.body)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, WriteError> {
    fs::write(&path, contents).map_err(|source| WriteError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the report and its series into `dir`, returning the written paths.
pub fn emit(dir: &Path, report_name: &str, report: &Report, series: &[Series]) -> Result<Vec<PathBuf>, WriteError> {
    fs::create_dir_all(dir).map_err(|source| WriteError {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    let mut written = vec![write(dir.join(report_name), &json)?];
    for s in series {
        written.push(write(dir.join(s.file), &s.render())?);
    }
    Ok(written)
}
