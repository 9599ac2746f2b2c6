//! Checks, summaries and the output directory layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use entropic_core::{ComplexField, ScalarField};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const OUT_DIR_ENV: &str = "EDLAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "edlab-out";

/// Output root: `$EDLAB_OUT_DIR`, else `./edlab-out`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// A quantity compared with a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `max`: value must not exceed the tolerance; `min`: must not fall below it.
    pub kind: String,
    pub passed: bool,
    pub note: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64, note: &str) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            kind: "max".into(),
            passed: value <= tolerance,
            note: note.into(),
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64, note: &str) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            kind: "min".into(),
            passed: value >= tolerance,
            note: note.into(),
        }
    }

    pub fn line(&self) -> String {
        let op = if self.kind == "max" { "<=" } else { ">=" };
        format!(
            "{} {}: {:.6e} {op} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// One `summary.json` per command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkers: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub elapsed_seconds: f64,
}

impl Summary {
    pub fn new(command: &str, scenario: &str) -> Self {
        Self {
            command: command.into(),
            scenario: scenario.into(),
            engine: None,
            seed: None,
            dt: None,
            steps: None,
            walkers: None,
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            elapsed_seconds: 0.0,
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn exit_code(&self) -> u8 {
        u8::from(!self.passed)
    }
}

/// Directory receiving the files of one invocation.
#[derive(Debug, Clone)]
pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, body).map_err(|e| LabError::io(p, e))
    }

    pub fn scalar(&self, name: &str, f: &ScalarField) -> Result<()> {
        let p = self.path(name);
        f.write_csv(&p).map_err(|e| LabError::io(p, e))
    }

    pub fn complex(&self, name: &str, f: &ComplexField) -> Result<()> {
        let p = self.path(name);
        f.write_csv(&p).map_err(|e| LabError::io(p, e))
    }

    /// CSV table with a header row.
    pub fn table(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        let io = |e: csv::Error| LabError::io(&p, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(&p).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(io)?;
        }
        w.flush().map_err(|e| LabError::io(&p, e))
    }

    pub fn summary(&self, s: &Summary) -> Result<()> {
        let body = serde_json::to_string_pretty(s).expect("summary serializes");
        self.text("summary.json", &(body + "\n"))
    }
}

/// Read a CSV table written by [`Artifacts::table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bad = |m: String| LabError::Artifacts(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(
            rec.iter()
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header, rows))
}

pub fn snapshot_name(kind: &str, index: usize) -> String {
    format!("snapshots/{kind}_{index:04}.csv")
}
