//! The Hamiltonian and a residual report for the maximum-principle conditions.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{dh_dq, hermite_mid, interval_states, AdjointArc, Trajectory};
use crate::problem::{CellKind, ControlProblem, SampledControl, TerminalSpec};

/// Acceptance thresholds for [`evaluate_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Extremal equations, scaled by `1 + ‖p‖∞`.
    pub extremal: f64,
    /// Maximization defects, each already divided by `1 + |H|`.
    pub maximization: f64,
    pub transversality: f64,
    pub final_time: f64,
    /// Points per dimension of the `z`-grid for the right-dense condition.
    pub z_grid: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            extremal: 1e-3,
            maximization: 1e-5,
            transversality: 1e-6,
            final_time: 1e-6,
            z_grid: 101,
        }
    }
}

/// `H = ⟨p, f⟩ + p⁰ f⁰` and its partials in `q` and `u`.
pub fn hamiltonian(
    problem: &ControlProblem,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    p0: f64,
    u: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    if p.len() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.state_dim(),
            got: p.len(),
        });
    }
    let e = problem.eval_dynamics(t, q, u)?;
    let h = p.dot(&e.f) + p0 * e.f0;
    let dq = e.df_dq.transpose() * p + &e.df0_dq * p0;
    let du = e.df_du.transpose() * p + &e.df0_du * p0;
    Ok((h, dq, du))
}

fn h_value(problem: &ControlProblem, t: f64, q: &DVector<f64>, p: &DVector<f64>, p0: f64, u: &DVector<f64>) -> f64 {
    let (f, f0) = problem.dynamics.rhs(t, q, u);
    p.dot(&f) + p0 * f0
}

fn dh_du(problem: &ControlProblem, t: f64, q: &DVector<f64>, p: &DVector<f64>, p0: f64, u: &DVector<f64>) -> DVector<f64> {
    let e = problem.dynamics.eval(t, q, u);
    e.df_du.transpose() * p + e.df0_du * p0
}

fn check_grids(ctrl: &SampledControl, traj: &Trajectory, adj: &AdjointArc) -> Result<()> {
    let n = ctrl.mesh().len();
    let same = |m: &crate::problem::Mesh| m.nodes == ctrl.mesh().nodes;
    if traj.q.len() != n || adj.p.len() != n || !same(&traj.mesh) || !same(&adj.mesh) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Adjoint at the midpoint of continuous interval `k` by Hermite interpolation.
fn adjoint_mid(
    problem: &ControlProblem,
    traj: &Trajectory,
    adj: &AdjointArc,
    u: &DVector<f64>,
    k: usize,
    qs: &[DVector<f64>; 3],
) -> DVector<f64> {
    let nodes = &traj.mesh.nodes;
    let (t0, t1) = (nodes[k].t, nodes[k + 1].t);
    let g0 = -dh_dq(problem, t0, &qs[0], &adj.p[k], adj.p0, u);
    let g1 = -dh_dq(problem, t1, &qs[2], &adj.p[k + 1], adj.p0, u);
    hermite_mid(&adj.p[k], &adj.p[k + 1], &g0, &g1, t1 - t0)
}

/// `∫ ∂H/∂u(τ, q, p^σ, p⁰, u) Δτ` over control cell `cell`. For a
/// right-scattered cell this is the gradient of the maximization condition;
/// for any cell it is the derivative of `−p⁰·J`-weighted cost in the cell value.
pub fn cell_gradient(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    adj: &AdjointArc,
    cell: usize,
) -> DVector<f64> {
    let mesh = ctrl.mesh();
    let c = mesh.cells[cell];
    let u = ctrl.cell_value(cell);
    let p0 = adj.p0;
    let mut g = DVector::zeros(problem.control_dim());
    for k in c.first_node..c.end_node {
        let node = mesh.nodes[k];
        if node.class.is_scattered() {
            g += dh_du(problem, node.t, &traj.q[k], &adj.p[k + 1], p0, u) * node.class.graininess;
        } else {
            let t1 = mesh.nodes[k + 1].t;
            let dt = t1 - node.t;
            let qs = interval_states(problem, traj, u, k);
            let pm = adjoint_mid(problem, traj, adj, u, k, &qs);
            let tm = node.t + 0.5 * dt;
            let s = dh_du(problem, node.t, &qs[0], &adj.p[k], p0, u)
                + dh_du(problem, tm, &qs[1], &pm, p0, u) * 4.0
                + dh_du(problem, t1, &qs[2], &adj.p[k + 1], p0, u);
            g += s * (dt / 6.0);
        }
    }
    g
}

/// `G(r) = ∫_{[r, σ₁*(r))} ∂H/∂u(τ, q*, p^σ, p⁰, u*(r)) Δτ`.
pub fn scattered_gradient(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    adj: &AdjointArc,
    r: f64,
) -> Result<DVector<f64>> {
    check_grids(ctrl, traj, adj)?;
    let mesh = ctrl.mesh();
    let cell = mesh
        .cell_starting_at(r)
        .ok_or(Error::PointNotInScale { t: r })?;
    if mesh.cells[cell].kind != CellKind::Scattered {
        return Err(Error::WrongPointClass {
            t: r,
            expected: "right-scattered",
        });
    }
    Ok(cell_gradient(problem, ctrl, traj, adj, cell))
}

/// Right-dense maximization check at one controlling node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseCheck {
    pub t: f64,
    pub h: f64,
    /// `max_z H(z) − H(u(t))`, not normalized.
    pub gap: f64,
    /// Indices into the `z`-grid attaining the maximum.
    pub argmax: Vec<usize>,
}

/// Right-scattered maximization check at one controlling time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteredCheck {
    pub r: f64,
    pub h: f64,
    pub gradient: Vec<f64>,
    /// `⟨G(r), y − u(r)⟩` for every sampled `y`.
    pub inner: Vec<f64>,
}

/// One line of the report table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Residuals of every necessary condition for a candidate extremal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    pub state_residual: f64,
    pub adjoint_residual: f64,
    pub extremal_residual: f64,
    pub dense_max_residual: f64,
    pub scattered_grad_residual: f64,
    pub transversality_residual: f64,
    pub final_time_h_residual: Option<f64>,
    pub nontrivial: bool,
    pub normal: bool,
    pub p_sup: f64,
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub dense_checks: Vec<DenseCheck>,
    #[serde(skip)]
    pub scattered_checks: Vec<ScatteredCheck>,
}

impl PmpReport {
    pub fn conditions(&self) -> Vec<Condition> {
        let tol = &self.tolerances;
        let row = |name, residual: f64, tolerance: f64| Condition {
            name,
            residual,
            tolerance,
            pass: residual <= tolerance,
        };
        let ext_tol = tol.extremal * (1.0 + self.p_sup);
        let mut rows = vec![
            row("extremal_state", self.state_residual, ext_tol),
            row("extremal_adjoint", self.adjoint_residual, ext_tol),
            row("dense_maximization", self.dense_max_residual, tol.maximization),
            row("scattered_maximization", self.scattered_grad_residual, tol.maximization),
            row("transversality", self.transversality_residual, tol.transversality),
            Condition {
                name: "nontriviality",
                residual: if self.nontrivial { 0.0 } else { 1.0 },
                tolerance: 0.0,
                pass: self.nontrivial,
            },
        ];
        if let Some(r) = self.final_time_h_residual {
            rows.push(row("final_time_hamiltonian", r, tol.final_time));
        }
        rows
    }

    pub fn pass(&self) -> bool {
        self.conditions().iter().all(|c| c.pass)
    }

    /// Largest residual relative to its tolerance scale, for summaries.
    pub fn max_residual(&self) -> f64 {
        [
            self.extremal_residual / (1.0 + self.p_sup),
            self.dense_max_residual,
            self.scattered_grad_residual,
            self.transversality_residual,
            self.final_time_h_residual.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Flat `key = value` block.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for c in self.conditions() {
            let _ = writeln!(s, "{}.residual = {:.16e}", c.name, c.residual);
            let _ = writeln!(s, "{}.tolerance = {:.16e}", c.name, c.tolerance);
            let _ = writeln!(s, "{}.pass = {}", c.name, c.pass);
        }
        let _ = writeln!(s, "normal = {}", self.normal);
        let _ = writeln!(s, "p_sup = {:.16e}", self.p_sup);
        let _ = writeln!(s, "pass = {}", self.pass());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,residual,tolerance,pass\n");
        for c in self.conditions() {
            let _ = writeln!(s, "{},{:.16e},{:.16e},{}", c.name, c.residual, c.tolerance, c.pass);
        }
        s
    }
}

fn extremal_residuals(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    adj: &AdjointArc,
) -> (f64, f64) {
    let nodes = &traj.mesh.nodes;
    let p0 = adj.p0;
    let (mut state, mut adjoint) = (0.0f64, 0.0f64);
    for k in 0..nodes.len() - 1 {
        let u = ctrl.on_interval(k);
        let t = nodes[k].t;
        let (qk, pk, pn) = (&traj.q[k], &adj.p[k], &adj.p[k + 1]);
        if nodes[k].class.is_scattered() {
            let mu = nodes[k].class.graininess;
            let (f, f0) = problem.dynamics.rhs(t, qk, u);
            let dq = (&traj.q[k + 1] - qk) / mu - f;
            let dq0 = (traj.q0[k + 1] - traj.q0[k]) / mu - f0;
            state = state.max(dq.amax()).max(dq0.abs());
            let dp = (pn - pk) / mu + dh_dq(problem, t, qk, pn, p0, u);
            adjoint = adjoint.max(dp.amax());
        } else {
            let t1 = nodes[k + 1].t;
            let dt = t1 - t;
            let tm = t + 0.5 * dt;
            let qs = interval_states(problem, traj, u, k);
            let pm = adjoint_mid(problem, traj, adj, u, k, &qs);
            let (fa, ca) = problem.dynamics.rhs(t, &qs[0], u);
            let (fm, cm) = problem.dynamics.rhs(tm, &qs[1], u);
            let (fb, cb) = problem.dynamics.rhs(t1, &qs[2], u);
            let dq = (&traj.q[k + 1] - qk) / dt - (fa + fm * 4.0 + fb) / 6.0;
            let dq0 = (traj.q0[k + 1] - traj.q0[k]) / dt - (ca + 4.0 * cm + cb) / 6.0;
            state = state.max(dq.amax()).max(dq0.abs());
            let ga = dh_dq(problem, t, &qs[0], pk, p0, u);
            let gm = dh_dq(problem, tm, &qs[1], &pm, p0, u);
            let gb = dh_dq(problem, t1, &qs[2], pn, p0, u);
            let dp = (pn - pk) / dt + (ga + gm * 4.0 + gb) / 6.0;
            adjoint = adjoint.max(dp.amax());
        }
    }
    (state, adjoint)
}

/// Certifies a candidate `(q, u, p, p⁰)` against every necessary condition.
pub fn evaluate_report(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    adj: &AdjointArc,
    tol: &Tolerances,
) -> Result<PmpReport> {
    check_grids(ctrl, traj, adj)?;
    let mesh = ctrl.mesh();
    let p0 = adj.p0;
    let (state_residual, adjoint_residual) = extremal_residuals(problem, ctrl, traj, adj);

    let z_grid = problem.omega.grid(tol.z_grid);
    let mut dense_checks = Vec::new();
    let mut dense_max_residual = 0.0f64;
    for (c, cell) in mesh.cells.iter().enumerate() {
        if cell.kind != CellKind::Dense {
            continue;
        }
        let u = ctrl.cell_value(c);
        let switches = c > 0 && (ctrl.cell_value(c - 1) - u).amax() > 1e-12;
        if switches {
            continue;
        }
        let k = cell.first_node;
        let (t, q, p) = (cell.start, &traj.q[k], &adj.p[k]);
        let h = h_value(problem, t, q, p, p0, u);
        let hz: Vec<f64> = z_grid.iter().map(|z| h_value(problem, t, q, p, p0, z)).collect();
        let best = hz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + best.abs());
        let argmax = (0..hz.len()).filter(|&i| hz[i] >= best - slack).collect();
        let gap = (best - h).max(0.0);
        dense_max_residual = dense_max_residual.max(gap / (1.0 + h.abs()));
        dense_checks.push(DenseCheck { t, h, gap, argmax });
    }

    let y_samples = problem.omega.vertices_and_midpoints();
    let mut scattered_checks = Vec::new();
    let mut scattered_grad_residual = 0.0f64;
    for (c, cell) in mesh.cells.iter().enumerate() {
        if cell.kind != CellKind::Scattered {
            continue;
        }
        let u = ctrl.cell_value(c);
        let k = cell.first_node;
        let h = h_value(problem, cell.start, &traj.q[k], &adj.p[k], p0, u);
        let g = cell_gradient(problem, ctrl, traj, adj, c);
        let inner: Vec<f64> = y_samples.iter().map(|y| g.dot(&(y - u))).collect();
        let worst = inner.iter().copied().fold(0.0, f64::max);
        scattered_grad_residual = scattered_grad_residual.max(worst / (1.0 + h.abs()));
        scattered_checks.push(ScatteredCheck {
            r: cell.start,
            h,
            gradient: g.iter().copied().collect(),
            inner,
        });
    }

    let last = adj.p.len() - 1;
    let transversality_residual = match &problem.terminal {
        TerminalSpec::FixedInitialFreeFinal { .. } => adj.p[last].amax().max((p0 + 1.0).abs()),
        TerminalSpec::FixedBoth { .. } => 0.0,
        TerminalSpec::Periodic => (&adj.p[0] - &adj.p[last]).amax(),
    };

    let p_sup = adj.sup_norm();
    let last_segment = problem
        .state_scale
        .segments()
        .last()
        .copied()
        .expect("scale is nonempty");
    let final_time_h_residual = (problem.free_final_time && !last_segment.is_point()).then(|| {
        let u = ctrl.on_interval(last - 1);
        h_value(problem, problem.b, &traj.q[last], &adj.p[last], p0, u).abs()
    });

    Ok(PmpReport {
        state_residual,
        adjoint_residual,
        extremal_residual: state_residual.max(adjoint_residual),
        dense_max_residual,
        scattered_grad_residual,
        transversality_residual,
        final_time_h_residual,
        nontrivial: p_sup > 0.0 || p0 != 0.0,
        normal: p0 != 0.0,
        p_sup,
        tolerances: *tol,
        dense_checks,
        scattered_checks,
    })
}
