//! Regression comparison of stored results against a golden file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tspmp_core::SolverKind;

use crate::error::{CliError, CliResult};
use crate::run::{ScenarioRecord, SolverRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenEntry {
    pub scenario: String,
    /// `C`, `cost`, or `u(t)` for a control value at time `t`.
    pub quantity: String,
    pub expected: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GoldenEntry {
    fn tolerance(&self) -> f64 {
        let rel = self.rel_tol.map_or(0.0, |r| r * self.expected.abs());
        rel.max(self.abs_tol.unwrap_or(0.0))
    }

    fn measure(&self, rec: &SolverRecord) -> Option<f64> {
        match self.quantity.as_str() {
            "C" => Some(rec.c),
            "cost" => Some(rec.cost),
            q => {
                let t = q.strip_prefix("u(")?.strip_suffix(')')?.trim().parse().ok()?;
                rec.control_at(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenFile {
    pub entries: Vec<GoldenEntry>,
}

impl GoldenFile {
    pub fn load(path: &Path) -> CliResult<GoldenFile> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenRow {
    pub scenario: String,
    pub solver: SolverKind,
    pub quantity: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenComparison {
    pub rows: Vec<GoldenRow>,
}

impl GoldenComparison {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::from("scenario,solver,quantity,expected,actual,tolerance,pass\n");
        for r in &self.rows {
            let actual = r.actual.map_or("missing".to_string(), |a| format!("{a:.10e}"));
            let _ = writeln!(
                s,
                "{},{},{},{:.10e},{},{:.3e},{}",
                r.scenario,
                r.solver.name(),
                r.quantity,
                r.expected,
                actual,
                r.tolerance,
                r.pass
            );
        }
        s
    }
}

/// Checks every golden entry against `results/<scenario>/result.json`.
pub fn compare_golden(results: &Path, golden: &GoldenFile) -> CliResult<GoldenComparison> {
    let mut rows = Vec::new();
    for entry in &golden.entries {
        let path = results.join(&entry.scenario).join("result.json");
        if !path.is_file() {
            return Err(CliError::MissingResult {
                scenario: entry.scenario.clone(),
                dir: results.to_path_buf(),
            });
        }
        let record = ScenarioRecord::load(&path)?;
        let solvers: Vec<&SolverRecord> = match entry.solver {
            Some(kind) => record.solver(kind).into_iter().collect(),
            None => record.solvers.iter().collect(),
        };
        if solvers.is_empty() {
            return Err(CliError::MissingResult {
                scenario: entry.scenario.clone(),
                dir: results.to_path_buf(),
            });
        }
        for rec in solvers {
            let actual = entry.measure(rec);
            let tolerance = entry.tolerance();
            rows.push(GoldenRow {
                scenario: entry.scenario.clone(),
                solver: rec.solver,
                quantity: entry.quantity.clone(),
                expected: entry.expected,
                actual,
                tolerance,
                pass: actual.is_some_and(|a| (a - entry.expected).abs() <= tolerance),
            });
        }
    }
    Ok(GoldenComparison { rows })
}
