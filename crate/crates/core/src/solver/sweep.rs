//! Backward recursion for the consumption model `q^Δ = u q`,
//! maximize `∫ (1 − u) q Δτ`, with `p(b) = 0` and `p⁰ = −1`.
//!
//! The adjoint is propagated in closed form from `b` towards `a`. Each
//! sampling interval of a right-scattered controlling time is settled by the
//! sign pattern of `Γ` (continuous state) or `Λ` (discrete state); each
//! right-dense stretch of the controlling scale follows the switching law
//! `u = 1` while `p > 1`, `u = 0` while `p < 1`.

use log::debug;
use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{backward_adjoint, forward};
use crate::pmp::{evaluate_report, Tolerances};
use crate::problem::{CellKind, ControlProblem, SampledControl, TerminalSpec};
use crate::scalar::bisect;
use crate::timescale::MEMBERSHIP_TOL;

use super::kernels::{
    decide_scattered_control, gamma_r, interval_value_continuous, interval_value_discrete,
    lambda_r, Decision, ROOT_TOL,
};
use super::{SolveResult, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StateKind {
    Continuous,
    UnitDiscrete,
}

/// Control chosen on the sampling interval `[r, r + μ₁)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteredDecision {
    pub r: f64,
    pub mu1: f64,
    /// `p(σ₁(r))`, the adjoint at the right end of the interval.
    pub p_next: f64,
    pub decision: Decision,
    /// `p(r)` after closed-form propagation.
    pub p_start: f64,
}

/// Switching law on one right-dense stretch `[lo, hi]`: `u = 1` before
/// `switch`, `u = 0` from `switch` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenseLaw {
    pub lo: f64,
    pub hi: f64,
    pub switch: f64,
}

/// Closed-form by-products of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SweepInfo {
    pub decisions: Vec<ScatteredDecision>,
    pub dense_laws: Vec<DenseLaw>,
    /// `(t, p(t))` at every controlling boundary, from `b` backwards.
    pub p_checkpoints: Vec<(f64, f64)>,
}

impl SweepInfo {
    pub fn p_at(&self, t: f64) -> Option<f64> {
        self.p_checkpoints
            .iter()
            .find(|(s, _)| (s - t).abs() <= MEMBERSHIP_TOL)
            .map(|&(_, p)| p)
    }

    fn scattered_value(&self, r: f64) -> Option<f64> {
        self.decisions
            .iter()
            .find(|d| (d.r - r).abs() <= MEMBERSHIP_TOL)
            .map(|d| d.decision.value)
    }

    fn dense_value(&self, t: f64) -> Option<f64> {
        self.dense_laws
            .iter()
            .find(|l| t >= l.lo - MEMBERSHIP_TOL && t <= l.hi + MEMBERSHIP_TOL)
            .map(|l| if t < l.switch { 1.0 } else { 0.0 })
    }
}

fn classify(problem: &ControlProblem) -> Result<StateKind> {
    let segs = problem.state_scale.segments();
    if segs.len() == 1 {
        return Ok(StateKind::Continuous);
    }
    let unit_steps = segs.iter().all(|s| s.is_point())
        && segs.windows(2).all(|w| (w[1].lo - w[0].hi - 1.0).abs() <= MEMBERSHIP_TOL);
    if unit_steps {
        Ok(StateKind::UnitDiscrete)
    } else {
        Err(Error::UnsupportedScenario(
            "the sweep needs a single interval or a unit-step integer grid as state scale".into(),
        ))
    }
}

/// `p(r)` from `p(r + μ)` with the control `u` held on `[r, r + μ)`.
fn propagate(kind: StateKind, u: f64, mu: f64, p_next: f64) -> f64 {
    match kind {
        StateKind::Continuous if u == 0.0 => p_next + mu,
        StateKind::Continuous => {
            let g = (u * mu).exp();
            p_next * g + (u - 1.0) / u * (1.0 - g)
        }
        StateKind::UnitDiscrete => {
            let steps = mu.round() as usize;
            (0..steps).fold(p_next, |p, _| (1.0 + u) * p + 1.0 - u)
        }
    }
}

/// Switching law on `[lo, hi]` given `p(hi)`; returns the law and `p(lo)`.
fn dense_stretch(lo: f64, hi: f64, p_hi: f64) -> (DenseLaw, f64) {
    if p_hi >= 1.0 {
        return (DenseLaw { lo, hi, switch: hi }, p_hi * (hi - lo).exp());
    }
    let excess = |t: f64| p_hi + hi - t - 1.0;
    if excess(lo) <= 0.0 {
        return (DenseLaw { lo, hi, switch: lo }, p_hi + hi - lo);
    }
    let switch = bisect(excess, lo, hi, ROOT_TOL);
    // Once u = 1, p grows backwards and cannot return to 1.
    debug_assert!(excess(0.5 * (lo + switch)) > 0.0);
    (DenseLaw { lo, hi, switch }, (switch - lo).exp())
}

/// Closed-form recursion followed by numerical certification.
pub fn backward_sweep_consumption(
    problem: &ControlProblem,
    h: f64,
    tol: &Tolerances,
) -> Result<SolveResult> {
    if !problem.is_consumption() {
        return Err(Error::UnsupportedScenario(
            "the backward sweep only handles the consumption template".into(),
        ));
    }
    let q_a = match &problem.terminal {
        TerminalSpec::FixedInitialFreeFinal { q_a } => DVector::from_column_slice(q_a),
        _ => {
            return Err(Error::UnsupportedScenario(
                "the backward sweep needs a fixed initial and free final state".into(),
            ))
        }
    };
    let kind = classify(problem)?;

    let segs = problem.control_scale.segments();
    let mut info = SweepInfo::default();
    let mut p = 0.0;
    info.p_checkpoints.push((problem.b, p));
    for i in (0..segs.len()).rev() {
        let seg = segs[i];
        if !seg.is_point() {
            let (law, p_lo) = dense_stretch(seg.lo, seg.hi, p);
            debug!("dense stretch [{}, {}] switches at {}", seg.lo, seg.hi, law.switch);
            info.dense_laws.push(law);
            p = p_lo;
            info.p_checkpoints.push((seg.lo, p));
        }
        if i == 0 {
            break;
        }
        let r = segs[i - 1].hi;
        let mu = seg.lo - r;
        let decision = match kind {
            StateKind::Continuous => decide_scattered_control(
                |x| gamma_r(x, mu, p).expect("argument within [0, 1]"),
                |x| interval_value_continuous(x, mu, p),
            ),
            StateKind::UnitDiscrete => decide_scattered_control(
                |x| lambda_r(x, mu, p).expect("argument within [0, 1]"),
                |x| interval_value_discrete(x, mu, p),
            ),
        };
        debug!("r = {r}: u = {} by {:?}", decision.value, decision.rule);
        let p_start = propagate(kind, decision.value, mu, p);
        info.decisions.push(ScatteredDecision {
            r,
            mu1: mu,
            p_next: p,
            decision,
            p_start,
        });
        p = p_start;
        info.p_checkpoints.push((r, p));
    }

    let breaks: Vec<f64> = info
        .dense_laws
        .iter()
        .filter(|l| l.switch > l.lo && l.switch < l.hi)
        .map(|l| l.switch)
        .collect();
    let mesh = problem.mesh(h, &breaks)?;
    let control = SampledControl::from_cells(mesh, &problem.omega, |cell| {
        let v = match cell.kind {
            CellKind::Scattered => info.scattered_value(cell.start),
            CellKind::Dense => info.dense_value(0.5 * (cell.start + cell.end)),
        };
        DVector::from_element(1, v.expect("every cell is covered by the sweep"))
    });

    let trajectory = forward(problem, &control, &q_a)?;
    let adjoint = backward_adjoint(
        problem,
        &control,
        &trajectory,
        &DVector::zeros(problem.state_dim()),
        -1.0,
    )?;
    let report = evaluate_report(problem, &control, &trajectory, &adjoint, tol)?;
    let cost = trajectory.cost();
    let diagnostics = info
        .decisions
        .iter()
        .filter_map(|d| d.decision.diagnostic.as_ref().map(|m| format!("r = {}: {m}", d.r)))
        .collect();
    Ok(SolveResult {
        solver: SolverKind::Sweep,
        control,
        trajectory,
        adjoint,
        cost,
        consumption_c: -cost,
        report,
        iterations: info.decisions.len() + info.dense_laws.len(),
        converged: true,
        diagnostics,
        sweep: Some(info),
    })
}
