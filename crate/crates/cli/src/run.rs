//! Solving a scenario and writing its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tspmp_core::integrate::write_csv;
use tspmp_core::problem::CellKind;
use tspmp_core::solver::{backward_sweep_consumption, direct_solve};
use tspmp_core::{ControlProblem, DVector, SampledControl, SolveResult, SolverKind};

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

/// Control value held on one cell, as stored in `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub t: f64,
    pub kind: String,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub solver: SolverKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub cost: f64,
    pub max_residual: f64,
    pub pass: bool,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
    pub mismatches: Vec<String>,
    pub controls: Vec<CellRecord>,
}

impl SolverRecord {
    /// First control component on the cell holding `t`.
    pub fn control_at(&self, t: f64) -> Option<f64> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.controls
            .iter()
            .rev()
            .find(|c| c.t <= t + tol)
            .and_then(|c| c.u.first().copied())
    }

    pub fn summary_line(&self, scenario: &str) -> String {
        format!(
            "{scenario}, {}, {:.10e}, {:.3e}, {}",
            self.solver.name(),
            self.c,
            self.max_residual,
            if self.ok() { "pass" } else { "fail" }
        )
    }

    pub fn ok(&self) -> bool {
        self.pass && self.mismatches.is_empty()
    }
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: String,
    pub h: f64,
    pub solvers: Vec<SolverRecord>,
}

impl ScenarioRecord {
    pub fn load(path: &Path) -> CliResult<ScenarioRecord> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn solver(&self, kind: SolverKind) -> Option<&SolverRecord> {
        self.solvers.iter().find(|s| s.solver == kind)
    }

    /// 0 when every solver passed its report and expectations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.solvers.iter().all(SolverRecord::ok) {
            0
        } else {
            1
        }
    }
}

/// A solved scenario with the full numerical results kept in memory.
pub struct ScenarioRun {
    pub record: ScenarioRecord,
    pub results: Vec<SolveResult>,
}

pub fn solve_one(
    scenario: &Scenario,
    problem: &ControlProblem,
    kind: SolverKind,
    h: f64,
) -> tspmp_core::Result<SolveResult> {
    match kind {
        SolverKind::Sweep => backward_sweep_consumption(problem, h, &scenario.tolerances),
        SolverKind::Direct => {
            let mesh = problem.mesh(h, &[])?;
            let u0 = scenario
                .init
                .as_ref()
                .map(|v| DVector::from_column_slice(v))
                .unwrap_or_else(|| problem.omega.midpoint());
            let init = SampledControl::constant(mesh, &problem.omega, &u0);
            direct_solve(problem, init, &scenario.direct, &scenario.tolerances)
        }
    }
}

fn cell_records(ctrl: &SampledControl) -> Vec<CellRecord> {
    ctrl.mesh()
        .cells
        .iter()
        .zip(ctrl.values())
        .map(|(cell, u)| CellRecord {
            t: cell.start,
            kind: match cell.kind {
                CellKind::Scattered => "RS",
                CellKind::Dense => "RD",
            }
            .to_string(),
            u: u.iter().copied().collect(),
        })
        .collect()
}

fn mismatches(scenario: &Scenario, res: &SolveResult) -> Vec<String> {
    let Some(exp) = &scenario.expected else {
        return Vec::new();
    };
    let mut out = Vec::new();
    if let Some(c) = &exp.c {
        if !c.accepts(res.consumption_c) {
            out.push(format!(
                "C: expected {} got {} (tolerance {:.3e})",
                c.value,
                res.consumption_c,
                c.tolerance()
            ));
        }
    }
    for pt in exp.controls.iter().filter(|p| p.applies_to(res.solver)) {
        match res.control.value_at(pt.t) {
            Ok(u) if (u[0] - pt.value).abs() <= pt.abs_tol => {}
            Ok(u) => out.push(format!(
                "u({}): expected {} got {} (tolerance {:.3e})",
                pt.t, pt.value, u[0], pt.abs_tol
            )),
            Err(e) => out.push(format!("u({}): {e}", pt.t)),
        }
    }
    for pt in exp.adjoint.iter().filter(|p| p.applies_to(res.solver)) {
        match res.adjoint.p_at(pt.t) {
            Ok(p) if (p[0] - pt.value).abs() <= pt.abs_tol => {}
            Ok(p) => out.push(format!(
                "p({}): expected {} got {} (tolerance {:.3e})",
                pt.t, pt.value, p[0], pt.abs_tol
            )),
            Err(e) => out.push(format!("p({}): {e}", pt.t)),
        }
    }
    out
}

/// Solves `scenario` with each requested solver without touching the disk.
pub fn run_scenario(scenario: &Scenario, step_override: Option<f64>) -> CliResult<ScenarioRun> {
    let solve_err = |source| CliError::Solve {
        scenario: scenario.name.clone(),
        source,
    };
    let problem = scenario.problem().map_err(solve_err)?;
    let h = scenario.step(&problem, step_override);
    let mut results = Vec::new();
    let mut solvers = Vec::new();
    for kind in scenario.solver.kinds() {
        let res = solve_one(scenario, &problem, kind, h).map_err(solve_err)?;
        log::info!(
            "{} {}: C = {} after {} iterations",
            scenario.name,
            kind.name(),
            res.consumption_c,
            res.iterations
        );
        solvers.push(SolverRecord {
            solver: kind,
            c: res.consumption_c,
            cost: res.cost,
            max_residual: res.report.max_residual(),
            pass: res.report.pass(),
            converged: res.converged,
            iterations: res.iterations,
            diagnostics: res.diagnostics.clone(),
            mismatches: mismatches(scenario, &res),
            controls: cell_records(&res.control),
        });
        results.push(res);
    }
    Ok(ScenarioRun {
        record: ScenarioRecord {
            scenario: scenario.name.clone(),
            h,
            solvers,
        },
        results,
    })
}

fn controls_csv(ctrl: &SampledControl) -> String {
    let m = ctrl.values().first().map_or(0, DVector::len);
    let mut s = String::from("t,kind");
    for i in 1..=m {
        let _ = write!(s, ",u{i}");
    }
    s.push('\n');
    for rec in cell_records(ctrl) {
        let _ = write!(s, "{:.16e},{}", rec.t, rec.kind);
        for v in rec.u {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes the artifacts of `run` under `out/<scenario name>/` and returns
/// that directory.
pub fn write_artifacts(run: &ScenarioRun, out: &Path) -> CliResult<PathBuf> {
    let dir = out.join(&run.record.scenario);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut summary = String::new();
    for (res, rec) in run.results.iter().zip(&run.record.solvers) {
        let name = res.solver.name();
        write(dir.join(format!("controls_{name}.csv")), controls_csv(&res.control))?;
        let mut traj = Vec::new();
        write_csv(&res.trajectory, Some(&res.adjoint), &mut traj)
            .map_err(|e| CliError::io(dir.join("trajectory"), e))?;
        write(dir.join(format!("trajectory_{name}.csv")), traj)?;
        write(dir.join(format!("report_{name}.txt")), res.report.to_kv())?;
        write(dir.join(format!("report_{name}.csv")), res.report.to_csv())?;
        summary.push_str(&rec.summary_line(&run.record.scenario));
        summary.push('\n');
        for m in &rec.mismatches {
            let _ = writeln!(summary, "  mismatch: {m}");
        }
    }
    write(dir.join("summary.txt"), summary)?;
    let json = serde_json::to_string_pretty(&run.record).expect("record is serializable");
    write(dir.join("result.json"), json)?;
    Ok(dir)
}
