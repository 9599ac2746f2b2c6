//! Cross-run comparison of emitted artifacts.

use std::path::{Path, PathBuf};

use entropic_core::metrics::{self, l1_distance, l2_distance, psi_distance_mod_phase};
use entropic_core::{ComplexField, ScalarField};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::report::{read_table, snapshot_name, Artifacts, Check, Summary};

/// A metric's default tolerance and its justification.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub metric: &'static str,
    pub value: f64,
    pub note: &'static str,
}

/// Default tolerances, all upper bounds on the metric value.
pub const DEFAULT_TOLERANCES: &[Tolerance] = &[
    Tolerance {
        metric: "rho_l1",
        value: 1e-3,
        note: "density L1 per snapshot; against an ensemble run: 1.5 x multinomial bound from W and occupied cells",
    },
    Tolerance {
        metric: "rho_l2",
        value: 1e-3,
        note: "density L2 per snapshot; cross-solver agreement at reference resolution",
    },
    Tolerance {
        metric: "psi_l2",
        value: 1e-3,
        note: "wave-function L2 per snapshot after global phase alignment",
    },
    Tolerance {
        metric: "variance",
        value: 1e-3,
        note: "relative difference of the per-axis variance",
    },
    Tolerance {
        metric: "com",
        value: 1e-3,
        note: "absolute difference of the centre of mass",
    },
    Tolerance {
        metric: "energy",
        value: 1e-4,
        note: "relative difference of the energy trajectories",
    },
    Tolerance {
        metric: "ks",
        value: f64::NAN,
        note: "largest marginal KS statistic of the final samples; tolerance is the 1% critical value",
    },
];

/// Factor on the multinomial bound when one side is an ensemble.
pub const ENSEMBLE_BOUND_FACTOR: f64 = 1.5;

pub fn default_tolerance(metric: &str) -> Option<&'static Tolerance> {
    DEFAULT_TOLERANCES.iter().find(|t| t.metric == metric)
}

/// Per-snapshot metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub t: f64,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: PathBuf,
    pub run_b: PathBuf,
    pub rows: Vec<MetricRow>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    /// Worst row of each metric, as checks.
    pub fn checks(&self) -> Vec<Check> {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        names.dedup();
        names
            .into_iter()
            .map(|m| {
                let rows: Vec<&MetricRow> = self.rows.iter().filter(|r| r.metric == m).collect();
                let worst = rows
                    .iter()
                    .copied()
                    .find(|r| !r.passed)
                    .unwrap_or_else(|| rows.iter().copied().max_by(|a, b| a.value.total_cmp(&b.value)).unwrap());
                let note = default_tolerance(m).map_or("", |t| t.note);
                Check {
                    name: m.into(),
                    value: worst.value,
                    tolerance: worst.tolerance,
                    kind: "max".into(),
                    passed: rows.iter().all(|r| r.passed),
                    note: note.into(),
                }
            })
            .collect()
    }
}

/// Emitted artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub engine: Option<String>,
    pub walkers: Option<usize>,
    pub times: Vec<f64>,
}

impl RunArtifacts {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| LabError::Artifacts(format!("{}: {e}", path.display())))?;
        // Read loosely: non-finite metrics are stored as null.
        let summary: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| LabError::Artifacts(format!("{}: {e}", path.display())))?;
        let (_, rows) = read_table(&dir.join("times.csv"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            engine: summary["engine"].as_str().map(String::from),
            walkers: summary["walkers"].as_u64().map(|w| w as usize),
            times: rows.iter().map(|r| r[2]).collect(),
        })
    }

    pub fn is_ensemble(&self) -> bool {
        self.walkers.is_some()
    }

    pub fn rho(&self, index: usize) -> Result<ScalarField> {
        let p = self.dir.join(snapshot_name("rho", index));
        ScalarField::read_csv(&p).map_err(|e| LabError::Artifacts(format!("{}: {e}", p.display())))
    }

    pub fn psi(&self, index: usize) -> Result<ComplexField> {
        let p = self.dir.join(snapshot_name("psi", index));
        if !p.exists() {
            return Err(LabError::Artifacts(format!(
                "{} has no wave-function snapshots (engine {})",
                self.dir.display(),
                self.engine.as_deref().unwrap_or("unknown")
            )));
        }
        ComplexField::read_csv(&p).map_err(|e| LabError::Artifacts(format!("{}: {e}", p.display())))
    }

    /// Final walker positions, one row per walker.
    pub fn samples(&self) -> Result<Option<Vec<Vec<f64>>>> {
        let p = self.dir.join("samples.csv");
        if !p.exists() {
            return Ok(None);
        }
        read_table(&p).map(|(_, rows)| Some(rows))
    }

    pub fn energies(&self) -> Result<Vec<f64>> {
        let p = self.dir.join("energy.csv");
        if !p.exists() {
            return Err(LabError::Artifacts(format!("{} has no energy trajectory", self.dir.display())));
        }
        read_table(&p).map(|(_, rows)| rows.iter().map(|r| r[1]).collect())
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn row(metric: &str, t: f64, value: f64, tolerance: f64) -> MetricRow {
    MetricRow {
        metric: metric.into(),
        t,
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

fn column(rows: &[Vec<f64>], axis: usize) -> Vec<f64> {
    rows.iter().map(|r| r[axis]).collect()
}

/// Largest marginal KS statistic and its 1% critical value.
fn ks(a: &RunArtifacts, b: &RunArtifacts, last: usize) -> Result<(f64, f64)> {
    let engine_err = |e: entropic_core::Error| LabError::Artifacts(format!("ks: {e}"));
    // Asymptotic critical coefficient c(0.01).
    const C_01: f64 = 1.628;
    match (a.samples()?, b.samples()?) {
        (Some(x), Some(y)) => {
            let dim = x.first().map_or(0, Vec::len);
            let mut d: f64 = 0.0;
            for axis in 0..dim {
                d = d.max(metrics::ks_two_sample(&column(&x, axis), &column(&y, axis)).map_err(engine_err)?.statistic);
            }
            let (n, m) = (x.len() as f64, y.len() as f64);
            Ok((d, C_01 * ((n + m) / (n * m)).sqrt()))
        }
        (Some(x), None) | (None, Some(x)) => {
            let rho = if a.samples()?.is_some() { b.rho(last)? } else { a.rho(last)? };
            let mut d: f64 = 0.0;
            for axis in 0..rho.space().dim() {
                d = d.max(metrics::ks_against_density(&column(&x, axis), &rho, axis).map_err(engine_err)?.statistic);
            }
            Ok((d, C_01 / (x.len() as f64).sqrt()))
        }
        (None, None) => Err(LabError::Artifacts("ks needs walker samples from at least one run".into())),
    }
}

/// Compare two runs snapshot by snapshot. `overrides` replace default tolerances.
pub fn compare(a: &RunArtifacts, b: &RunArtifacts, metrics_list: &[String], overrides: &[(String, f64)]) -> Result<ComparisonReport> {
    let ra = a.rho(0)?;
    let rb = b.rho(0)?;
    ra.space()
        .require_same(rb.space())
        .map_err(|_| LabError::Artifacts("grid mismatch between the runs".into()))?;
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(LabError::Artifacts(format!(
            "snapshot times differ ({} vs {} snapshots)",
            a.times.len(),
            b.times.len()
        )));
    }
    let tol = |m: &str| -> Result<Option<f64>> {
        if let Some((_, v)) = overrides.iter().rev().find(|(k, _)| k == m) {
            return Ok(Some(*v));
        }
        default_tolerance(m)
            .map(|t| Some(t.value).filter(|v| !v.is_nan()))
            .ok_or_else(|| LabError::Usage(format!("unknown metric `{m}`")))
    };
    let mut rows = Vec::new();
    let dist_err = |e: entropic_core::Error| LabError::Artifacts(e.to_string());
    let last = a.times.len() - 1;
    for m in metrics_list {
        let m = m.as_str();
        let tolerance = tol(m)?;
        match m {
            "rho_l1" | "rho_l2" | "variance" | "com" => {
                for (i, t) in a.times.iter().enumerate() {
                    let (x, y) = (a.rho(i)?, b.rho(i)?);
                    let tolerance = tolerance.unwrap();
                    match m {
                        "rho_l1" => {
                            let d = l1_distance(&x, &y).map_err(dist_err)?;
                            let sampled: Vec<_> = [(a, &x), (b, &y)].into_iter().filter(|(r, _)| r.is_ensemble()).collect();
                            let tol = match sampled.first() {
                                Some((r, hist)) if !overrides.iter().any(|(k, _)| k == m) => {
                                    let w = r.walkers.unwrap();
                                    ENSEMBLE_BOUND_FACTOR * metrics::multinomial_l1_bound(w, metrics::occupied_cells(hist))
                                }
                                _ => tolerance,
                            };
                            rows.push(row(m, *t, d, tol));
                        }
                        "rho_l2" => rows.push(row(m, *t, l2_distance(&x, &y).map_err(dist_err)?, tolerance)),
                        "variance" => {
                            let (va, vb) = (metrics::variance(&x), metrics::variance(&y));
                            let d = va.iter().zip(&vb).map(|(p, q)| relative(*p, *q)).fold(0.0, f64::max);
                            rows.push(row(m, *t, d, tolerance));
                        }
                        _ => {
                            let (ca, cb) = (metrics::center_of_mass(&x), metrics::center_of_mass(&y));
                            let d = ca.iter().zip(&cb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                            rows.push(row(m, *t, d, tolerance));
                        }
                    }
                }
            }
            "psi_l2" => {
                for (i, t) in a.times.iter().enumerate() {
                    let d = psi_distance_mod_phase(&a.psi(i)?, &b.psi(i)?).map_err(dist_err)?;
                    rows.push(row(m, *t, d, tolerance.unwrap()));
                }
            }
            "energy" => {
                let (ea, eb) = (a.energies()?, b.energies()?);
                if ea.len() != eb.len() {
                    return Err(LabError::Artifacts("energy trajectories have different lengths".into()));
                }
                for ((t, x), y) in a.times.iter().zip(&ea).zip(&eb) {
                    rows.push(row(m, *t, relative(*x, *y), tolerance.unwrap()));
                }
            }
            "ks" => {
                let (d, critical) = ks(a, b, last)?;
                rows.push(row(m, a.times[last], d, tolerance.unwrap_or(critical)));
            }
            other => return Err(LabError::Usage(format!("unknown metric `{other}`"))),
        }
    }
    Ok(ComparisonReport {
        run_a: a.dir.clone(),
        run_b: b.dir.clone(),
        rows,
    })
}

/// Write `comparison.csv` and `summary.json` for a report.
pub fn write_report(report: &ComparisonReport, out: &Artifacts, summary: &mut Summary) -> Result<()> {
    let p = out.path("comparison.csv");
    let io = |e: csv::Error| LabError::io(&p, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(&p).map_err(io)?;
    for r in &report.rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| LabError::io(&p, e))?;
    for c in report.checks() {
        summary.metric(&c.name, c.value);
        summary.check(c);
    }
    out.summary(summary)
}
