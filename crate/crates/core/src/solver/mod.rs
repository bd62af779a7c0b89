//! Solvers for the sampled-data problem.
//!
//! [`sweep`] runs the closed-form backward recursion of the consumption
//! model; [`direct`] is a projected-gradient method for any problem with a
//! fixed initial state and a free final state. The two are independent and
//! serve as oracles for each other.

use serde::{Deserialize, Serialize};

use crate::integrate::{AdjointArc, Trajectory};
use crate::pmp::PmpReport;
use crate::problem::SampledControl;

pub mod direct;
pub mod kernels;
pub mod sweep;

pub use direct::{direct_solve, DirectOptions};
pub use kernels::{decide_scattered_control, gamma_r, lambda_r, Decision, DecisionRule};
pub use sweep::{backward_sweep_consumption, ScatteredDecision, SweepInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Sweep,
    Direct,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Sweep => "sweep",
            SolverKind::Direct => "direct",
        }
    }
}

/// A solved candidate together with its certificate.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub control: SampledControl,
    pub trajectory: Trajectory,
    pub adjoint: AdjointArc,
    /// `q⁰(b)`, the minimized functional.
    pub cost: f64,
    /// `−cost`, the consumption of the example.
    pub consumption_c: f64,
    pub report: PmpReport,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
    pub sweep: Option<SweepInfo>,
}

impl SolveResult {
    /// Control held at the controlling time `t`.
    pub fn control_at(&self, t: f64) -> Option<f64> {
        self.control.value_at(t).ok().map(|v| v[0])
    }
}
