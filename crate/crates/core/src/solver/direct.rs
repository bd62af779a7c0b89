//! Projected gradient ascent on the cell values of a sampled control.
//!
//! With `p(b) = 0` and `p⁰ = −1`, the derivative of `−q⁰(b)` with respect to
//! the value held on a control cell is the integral of `∂H/∂u` over that
//! cell, so one forward and one adjoint pass give the full gradient.

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{backward_adjoint, forward, AdjointArc, Trajectory};
use crate::pmp::{cell_gradient, evaluate_report, Tolerances};
use crate::problem::{ControlProblem, SampledControl, TerminalSpec};

use super::{SolveResult, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectOptions {
    pub max_iterations: usize,
    /// Bound on `‖P(u + G / (1 + |J|)) − u‖∞`.
    pub gradient_tol: f64,
    /// Sufficient-increase constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            max_iterations: 10_000,
            gradient_tol: 1e-8,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

struct Iterate {
    control: SampledControl,
    trajectory: Trajectory,
    adjoint: AdjointArc,
    gradient: Vec<DVector<f64>>,
    objective: f64,
}

fn evaluate(problem: &ControlProblem, q_a: &DVector<f64>, control: SampledControl) -> Result<Iterate> {
    let trajectory = forward(problem, &control, q_a)?;
    let adjoint = backward_adjoint(
        problem,
        &control,
        &trajectory,
        &DVector::zeros(problem.state_dim()),
        -1.0,
    )?;
    let gradient = (0..control.mesh().cells.len())
        .map(|c| cell_gradient(problem, &control, &trajectory, &adjoint, c))
        .collect();
    let objective = -trajectory.cost();
    Ok(Iterate {
        control,
        trajectory,
        adjoint,
        gradient,
        objective,
    })
}

fn stationarity(problem: &ControlProblem, it: &Iterate) -> f64 {
    let scale = 1.0 + it.objective.abs();
    it.control
        .values()
        .iter()
        .zip(&it.gradient)
        .map(|(u, g)| (problem.omega.project(&(u + g / scale)) - u).amax())
        .fold(0.0, f64::max)
}

fn stepped(problem: &ControlProblem, it: &Iterate, alpha: f64) -> SampledControl {
    let mut next = it.control.clone();
    for (c, g) in it.gradient.iter().enumerate() {
        let v = it.control.cell_value(c) + g * alpha;
        next.set_cell_value(c, &v, &problem.omega);
    }
    next
}

fn directional_gain(it: &Iterate, next: &SampledControl) -> f64 {
    it.gradient
        .iter()
        .zip(next.values().iter().zip(it.control.values()))
        .map(|(g, (v, u))| g.dot(&(v - u)))
        .sum()
}

/// Maximizes `−q⁰(b)` over the cell values of `init`, keeping its mesh.
pub fn direct_solve(
    problem: &ControlProblem,
    init: SampledControl,
    opts: &DirectOptions,
    tol: &Tolerances,
) -> Result<SolveResult> {
    let q_a = match &problem.terminal {
        TerminalSpec::FixedInitialFreeFinal { q_a } => DVector::from_column_slice(q_a),
        _ => {
            return Err(Error::UnsupportedScenario(
                "the direct solver needs a fixed initial and free final state".into(),
            ))
        }
    };
    let mut it = evaluate(problem, &q_a, init)?;
    let mut alpha = {
        let gmax = it.gradient.iter().map(|g| g.amax()).fold(0.0, f64::max);
        if gmax > 0.0 { 1.0 / gmax } else { 1.0 }
    };
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let measure = stationarity(problem, &it);
        if measure <= opts.gradient_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let next = stepped(problem, &it, alpha);
            let gain = directional_gain(&it, &next);
            if gain <= 0.0 {
                break;
            }
            let cand = evaluate(problem, &q_a, next)?;
            if cand.objective >= it.objective + opts.armijo * gain {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(next) => {
                it = next;
                alpha *= 2.0;
            }
            None => {
                // No ascent is possible at floating-point resolution.
                converged = measure <= opts.gradient_tol.sqrt();
                let note = format!(
                    "line search stalled at iteration {iterations} with stationarity {measure:e}"
                );
                if converged {
                    debug!("{note}");
                } else {
                    warn!("{note}");
                }
                diagnostics.push(note);
                break;
            }
        }
    }
    if !converged {
        let err = Error::NoConvergence {
            iterations,
            gradient: stationarity(problem, &it),
        };
        diagnostics.push(err.to_string());
    }
    let report = evaluate_report(problem, &it.control, &it.trajectory, &it.adjoint, tol)?;
    let cost = it.trajectory.cost();
    Ok(SolveResult {
        solver: SolverKind::Direct,
        control: it.control,
        trajectory: it.trajectory,
        adjoint: it.adjoint,
        cost,
        consumption_c: -cost,
        report,
        iterations,
        converged,
        diagnostics,
        sweep: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::TimeScale;

    fn continuous(period: f64) -> ControlProblem {
        ControlProblem::consumption(
            TimeScale::interval(0.0, 12.0).unwrap(),
            TimeScale::uniform(0.0, period, 12.0).unwrap(),
        )
        .unwrap()
    }

    fn solve(p: &ControlProblem) -> SolveResult {
        let mesh = p.mesh(0.012, &[]).unwrap();
        let init = SampledControl::constant(mesh, &p.omega, &p.omega.midpoint());
        direct_solve(p, init, &DirectOptions::default(), &Tolerances::default()).unwrap()
    }

    #[test]
    fn twelve_period_interior_optimum() {
        let res = solve(&continuous(12.0));
        assert!(res.converged, "{:?}", res.diagnostics);
        assert!((res.control_at(0.0).unwrap() - 0.9083).abs() < 1e-3);
        assert!((res.consumption_c - 5467.24).abs() < 0.5);
        assert!(res.report.pass(), "{}", res.report.to_kv());
    }

    #[test]
    fn two_period_saturates() {
        let res = solve(&continuous(2.0));
        for t in [0.0, 2.0, 4.0, 6.0, 8.0] {
            assert_eq!(res.control_at(t), Some(1.0));
        }
        assert!(res.control_at(10.0).unwrap() < 1e-4);
        assert!((res.consumption_c - 2.0 * 10f64.exp()).abs() < 1.0);
    }

    #[test]
    fn rejects_fixed_endpoints() {
        let p = ControlProblem::new(
            TimeScale::interval(0.0, 1.0).unwrap(),
            TimeScale::points(&[0.0]).unwrap(),
            crate::problem::DynamicsSpec::Consumption,
            crate::problem::ControlBox::unit(),
            TerminalSpec::FixedBoth {
                q_a: vec![1.0],
                q_b: vec![2.0],
            },
        )
        .unwrap();
        let init = SampledControl::constant(p.mesh(0.1, &[]).unwrap(), &p.omega, &p.omega.midpoint());
        assert!(matches!(
            direct_solve(&p, init, &DirectOptions::default(), &Tolerances::default()),
            Err(Error::UnsupportedScenario(_))
        ));
    }
}
