//! Scenario files: a JSON description of one problem instance, the solvers
//! to run on it and optional expected values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tspmp_core::pmp::Tolerances;
use tspmp_core::problem::{ControlBox, DynamicsSpec, TerminalSpec};
use tspmp_core::solver::DirectOptions;
use tspmp_core::{ControlProblem, ScaleGenerator, SolverKind};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Sweep,
    Direct,
    Both,
}

impl SolverChoice {
    pub fn kinds(self) -> Vec<SolverKind> {
        match self {
            SolverChoice::Sweep => vec![SolverKind::Sweep],
            SolverChoice::Direct => vec![SolverKind::Direct],
            SolverChoice::Both => vec![SolverKind::Sweep, SolverKind::Direct],
        }
    }
}

/// A scalar with a relative and/or absolute tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedScalar {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

impl ExpectedScalar {
    pub fn tolerance(&self) -> f64 {
        let rel = self.rel_tol.map_or(0.0, |r| r * self.value.abs());
        rel.max(self.abs_tol.unwrap_or(0.0))
    }

    pub fn accepts(&self, actual: f64) -> bool {
        (actual - self.value).abs() <= self.tolerance()
    }
}

/// An expected value of the control or the adjoint at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedPoint {
    pub t: f64,
    pub value: f64,
    pub abs_tol: f64,
    /// Restricts the check to these solvers; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvers: Option<Vec<SolverKind>>,
}

impl ExpectedPoint {
    pub fn applies_to(&self, solver: SolverKind) -> bool {
        self.solvers.as_ref().is_none_or(|s| s.contains(&solver))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// Consumption `C = −q⁰(b)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<ExpectedScalar>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<ExpectedPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adjoint: Vec<ExpectedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub window: [f64; 2],
    pub state_scale: ScaleGenerator,
    pub control_scale: ScaleGenerator,
    pub template: DynamicsSpec,
    pub omega: ControlBox,
    pub terminal: TerminalSpec,
    #[serde(default)]
    pub free_final_time: bool,
    pub solver: SolverChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Starting value of every cell for the direct solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub direct: DirectOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

impl Scenario {
    pub fn from_json(text: &str, origin: &Path) -> CliResult<Scenario> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Scenario> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let scenario = Scenario::from_json(&text, path)?;
        // Surface scale and dimension problems as parse errors.
        scenario.problem().map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario is always serializable")
    }

    pub fn problem(&self) -> tspmp_core::Result<ControlProblem> {
        let [a, b] = self.window;
        let ts = self.state_scale.expand(a, b)?;
        let ts1 = self.control_scale.expand(a, b)?;
        if ts.start() != a || ts.end() != b {
            return Err(tspmp_core::Error::InvalidProblem(format!(
                "state scale spans [{}, {}] instead of the window [{a}, {b}]",
                ts.start(),
                ts.end()
            )));
        }
        Ok(ControlProblem::new(
            ts,
            ts1,
            self.template.clone(),
            self.omega.clone(),
            self.terminal.clone(),
        )?
        .with_free_final_time(self.free_final_time))
    }

    /// Integration step: `override_h`, then the scenario value, then the default.
    pub fn step(&self, problem: &ControlProblem, override_h: Option<f64>) -> f64 {
        override_h
            .or(self.h)
            .unwrap_or_else(|| problem.default_step())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "name": "hybrid",
        "window": [0, 12],
        "state_scale": {"kind": "interval", "l": 0, "r": 12},
        "control_scale": {"kind": "union", "parts": [
            {"kind": "interval", "l": 0, "r": 6},
            {"kind": "points", "values": [10]},
            {"kind": "interval", "l": 11.5, "r": 12}
        ]},
        "template": {"id": "consumption"},
        "omega": {"lo": [0], "hi": [1]},
        "terminal": {"kind": "fixed_initial_free_final", "q_a": [1]},
        "solver": "both",
        "expected": {"c": {"value": 49476.604, "rel_tol": 1e-3}}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::from_json(SAMPLE, Path::new("inline")).unwrap();
        assert_eq!(s.solver.kinds().len(), 2);
        let again = Scenario::from_json(&s.to_json(), Path::new("inline")).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_json(), s.to_json());
        let p = s.problem().unwrap();
        assert_eq!(p.control_scale.segments().len(), 3);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = SAMPLE.replace("\"solver\"", "\"solvr\"");
        assert!(matches!(
            Scenario::from_json(&bad, Path::new("inline")),
            Err(CliError::Parse { .. })
        ));
    }

    #[test]
    fn expected_scalar_tolerance() {
        let e = ExpectedScalar {
            value: 100.0,
            rel_tol: Some(1e-3),
            abs_tol: None,
        };
        assert!(e.accepts(100.09));
        assert!(!e.accepts(100.2));
        let exact = ExpectedScalar {
            value: 2048.0,
            rel_tol: None,
            abs_tol: Some(0.0),
        };
        assert!(exact.accepts(2048.0));
    }
}
