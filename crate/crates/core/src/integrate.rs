//! Hybrid integration on an evaluation grid.
//!
//! Right-scattered nodes use the exact delta-derivative update
//! `x(σ(t)) = x(t) + μ(t) x^Δ(t)`; continuous grid intervals use one classical
//! RK4 step each. Linear problems driven by the state trajectory (adjoint,
//! variation vectors) evaluate the state between nodes by cubic Hermite
//! interpolation, which keeps them fourth-order accurate.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{CellKind, ControlProblem, Mesh, SampledControl};

/// State `q` and accumulated running cost `q⁰` at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mesh: Arc<Mesh>,
    pub q: Vec<DVector<f64>>,
    pub q0: Vec<f64>,
}

impl Trajectory {
    /// `q⁰(b)`, the cost functional.
    pub fn cost(&self) -> f64 {
        *self.q0.last().expect("trajectory has at least one node")
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.q.last().expect("trajectory has at least one node")
    }

    pub fn state_at(&self, t: f64) -> Result<&DVector<f64>> {
        self.mesh
            .node_index(t)
            .map(|k| &self.q[k])
            .ok_or(Error::PointNotInScale { t })
    }
}

/// Adjoint covector `p` at every grid node and the constant multiplier `p⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointArc {
    pub mesh: Arc<Mesh>,
    pub p: Vec<DVector<f64>>,
    pub p0: f64,
}

impl AdjointArc {
    pub fn p_at(&self, t: f64) -> Result<&DVector<f64>> {
        self.mesh
            .node_index(t)
            .map(|k| &self.p[k])
            .ok_or(Error::PointNotInScale { t })
    }

    /// `‖p‖∞` over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.p.iter().map(|p| p.amax()).fold(0.0, f64::max)
    }

    /// Multiplies `(p, p⁰)` by `lambda`.
    pub fn scaled(&self, lambda: f64) -> AdjointArc {
        AdjointArc {
            mesh: self.mesh.clone(),
            p: self.p.iter().map(|p| p * lambda).collect(),
            p0: self.p0 * lambda,
        }
    }
}

/// A perturbation whose first-order effect on the endpoint is requested.
#[derive(Debug, Clone, PartialEq)]
pub enum VariationRequest {
    /// Replace the value held at the right-scattered controlling time `r` by `y`.
    Scattered { r: f64, y: DVector<f64> },
    /// Needle of value `z` at the right-dense controlling node `s`.
    Dense { s: f64, z: DVector<f64> },
    /// Perturb the initial state in direction `dq_a`.
    Initial { dq_a: DVector<f64> },
}

/// Augmented variation vector `(w, w⁰)` from the node where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationPath {
    pub start_node: usize,
    /// Values at nodes `start_node..`; the last component of each is `w⁰`.
    pub w: Vec<DVector<f64>>,
    /// First node from which the equation is homogeneous.
    pub homogeneous_from: usize,
}

impl VariationPath {
    pub fn endpoint(&self) -> (DVector<f64>, f64) {
        let last = self.w.last().expect("variation path is nonempty");
        let n = last.len() - 1;
        (last.rows(0, n).into_owned(), last[n])
    }

    pub fn at_node(&self, k: usize) -> &DVector<f64> {
        &self.w[k - self.start_node]
    }
}

/// Midpoint value of the cubic Hermite interpolant with end slopes `f0`, `f1`.
pub(crate) fn hermite_mid(
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    f0: &DVector<f64>,
    f1: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    (x0 + x1) * 0.5 + (f0 - f1) * (dt / 8.0)
}

/// State at the left end, midpoint and right end of continuous interval `k`.
pub(crate) fn interval_states(
    problem: &ControlProblem,
    traj: &Trajectory,
    u: &DVector<f64>,
    k: usize,
) -> [DVector<f64>; 3] {
    let (t0, t1) = (traj.mesh.nodes[k].t, traj.mesh.nodes[k + 1].t);
    let (q0, q1) = (&traj.q[k], &traj.q[k + 1]);
    let (f0, _) = problem.dynamics.rhs(t0, q0, u);
    let (f1, _) = problem.dynamics.rhs(t1, q1, u);
    let mid = hermite_mid(q0, q1, &f0, &f1, t1 - t0);
    [q0.clone(), mid, q1.clone()]
}

fn check_finite(q: &DVector<f64>, q0: f64, t: f64) -> Result<()> {
    if q.iter().all(|x| x.is_finite()) && q0.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

/// Integrates the augmented state forward from `q_a` on the control's mesh.
pub fn forward(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    q_a: &DVector<f64>,
) -> Result<Trajectory> {
    let n = problem.state_dim();
    if q_a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q_a.len(),
        });
    }
    let mesh = ctrl.mesh().clone();
    let nodes = &mesh.nodes;
    let dyn_ = &problem.dynamics;
    let mut q = Vec::with_capacity(nodes.len());
    let mut q0 = Vec::with_capacity(nodes.len());
    q.push(q_a.clone());
    q0.push(0.0);
    for k in 0..nodes.len() - 1 {
        let u = ctrl.on_interval(k);
        let (t, x, c) = (nodes[k].t, &q[k], q0[k]);
        let (next, next_c) = if nodes[k].class.is_scattered() {
            let mu = nodes[k].class.graininess;
            let (f, f0) = dyn_.rhs(t, x, u);
            (x + f * mu, c + mu * f0)
        } else {
            let dt = nodes[k + 1].t - t;
            let (k1, c1) = dyn_.rhs(t, x, u);
            let (k2, c2) = dyn_.rhs(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)), u);
            let (k3, c3) = dyn_.rhs(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)), u);
            let (k4, c4) = dyn_.rhs(t + dt, &(x + &k3 * dt), u);
            (
                x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0),
                c + dt / 6.0 * (c1 + 2.0 * (c2 + c3) + c4),
            )
        };
        check_finite(&next, next_c, nodes[k + 1].t)?;
        q.push(next);
        q0.push(next_c);
    }
    Ok(Trajectory { mesh, q, q0 })
}

fn same_grid(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || a.nodes == b.nodes
}

/// `∂H/∂q = (∂f/∂q)ᵀ p + p⁰ ∂f⁰/∂q`.
pub(crate) fn dh_dq(
    problem: &ControlProblem,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    p0: f64,
    u: &DVector<f64>,
) -> DVector<f64> {
    let e = problem.dynamics.eval(t, q, u);
    e.df_dq.transpose() * p + e.df0_dq * p0
}

/// Solves the shifted adjoint equation `p^Δ = −∂H/∂q(t, q, p^σ, p⁰, u^Φ)`
/// backward from `p(b) = p_b`.
pub fn backward_adjoint(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    p_b: &DVector<f64>,
    p0: f64,
) -> Result<AdjointArc> {
    if !same_grid(ctrl.mesh(), &traj.mesh) || traj.q.len() != traj.mesh.len() {
        return Err(Error::GridMismatch);
    }
    let n = problem.state_dim();
    if p_b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p_b.len(),
        });
    }
    let nodes = &traj.mesh.nodes;
    let len = nodes.len();
    let mut p = vec![DVector::zeros(n); len];
    p[len - 1] = p_b.clone();
    for k in (0..len - 1).rev() {
        let u = ctrl.on_interval(k);
        let t = nodes[k].t;
        let next = &p[k + 1];
        p[k] = if nodes[k].class.is_scattered() {
            let mu = nodes[k].class.graininess;
            next + dh_dq(problem, t, &traj.q[k], next, p0, u) * mu
        } else {
            let t1 = nodes[k + 1].t;
            let dt = t1 - t;
            let [qa, qm, qb] = interval_states(problem, traj, u, k);
            let tm = t + 0.5 * dt;
            // dp/dt = −∂H/∂q, integrated with step −dt.
            let k1 = dh_dq(problem, t1, &qb, next, p0, u);
            let k2 = dh_dq(problem, tm, &qm, &(next + &k1 * (0.5 * dt)), p0, u);
            let k3 = dh_dq(problem, tm, &qm, &(next + &k2 * (0.5 * dt)), p0, u);
            let k4 = dh_dq(problem, t, &qa, &(next + &k3 * dt), p0, u);
            next + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
        };
        check_finite(&p[k], p0, t)?;
    }
    Ok(AdjointArc {
        mesh: traj.mesh.clone(),
        p,
        p0,
    })
}

/// Jacobian of the augmented dynamics `f̄ = (f, f⁰)` with respect to
/// `q̄ = (q, q⁰)`. Its last column is zero because `f̄` ignores `q⁰`.
fn augmented_jacobian(problem: &ControlProblem, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let e = problem.dynamics.eval(t, q, u);
    let n = q.len();
    let mut jac = DMatrix::zeros(n + 1, n + 1);
    jac.view_mut((0, 0), (n, n)).copy_from(&e.df_dq);
    jac.view_mut((n, 0), (1, n)).copy_from(&e.df0_dq.transpose());
    debug_assert!(jac.column(n).iter().all(|&x| x == 0.0));
    jac
}

fn augmented_control_jacobian(
    problem: &ControlProblem,
    t: f64,
    q: &DVector<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let e = problem.dynamics.eval(t, q, u);
    let (n, m) = (q.len(), u.len());
    let mut jac = DMatrix::zeros(n + 1, m);
    jac.view_mut((0, 0), (n, m)).copy_from(&e.df_du);
    jac.view_mut((n, 0), (1, m)).copy_from(&e.df0_du.transpose());
    jac
}

fn augmented_rhs(problem: &ControlProblem, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (f, f0) = problem.dynamics.rhs(t, q, u);
    let n = f.len();
    let mut out = DVector::zeros(n + 1);
    out.rows_mut(0, n).copy_from(&f);
    out[n] = f0;
    out
}

/// Integrates `w̄^Δ = (∂f̄/∂q̄) w̄ + forcing` from node `start`, with the
/// constant-direction forcing active on grid intervals below `forced_until`.
fn linear_forward(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    start: usize,
    w_start: DVector<f64>,
    forced_until: usize,
    direction: Option<&DVector<f64>>,
) -> Vec<DVector<f64>> {
    let nodes = &traj.mesh.nodes;
    let mut w = Vec::with_capacity(nodes.len() - start);
    w.push(w_start);
    for k in start..nodes.len() - 1 {
        let u = ctrl.on_interval(k);
        let t = nodes[k].t;
        let cur = w.last().expect("nonempty");
        let forcing = |tau: f64, q: &DVector<f64>| -> Option<DVector<f64>> {
            match direction {
                Some(d) if k < forced_until => {
                    Some(augmented_control_jacobian(problem, tau, q, u) * d)
                }
                _ => None,
            }
        };
        let rhs = |tau: f64, q: &DVector<f64>, x: &DVector<f64>| -> DVector<f64> {
            let lin = augmented_jacobian(problem, tau, q, u) * x;
            match forcing(tau, q) {
                Some(b) => lin + b,
                None => lin,
            }
        };
        let next = if nodes[k].class.is_scattered() {
            let mu = nodes[k].class.graininess;
            cur + rhs(t, &traj.q[k], cur) * mu
        } else {
            let t1 = nodes[k + 1].t;
            let dt = t1 - t;
            let tm = t + 0.5 * dt;
            let [qa, qm, qb] = interval_states(problem, traj, u, k);
            let k1 = rhs(t, &qa, cur);
            let k2 = rhs(tm, &qm, &(cur + &k1 * (0.5 * dt)));
            let k3 = rhs(tm, &qm, &(cur + &k2 * (0.5 * dt)));
            let k4 = rhs(t1, &qb, &(cur + &k3 * dt));
            cur + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
        };
        w.push(next);
    }
    w
}

/// Integrates the augmented variation vector for `req` over the whole grid.
pub fn variation_path(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    req: &VariationRequest,
) -> Result<VariationPath> {
    if !same_grid(ctrl.mesh(), &traj.mesh) {
        return Err(Error::GridMismatch);
    }
    let n = problem.state_dim();
    let mesh = &traj.mesh;
    match req {
        VariationRequest::Initial { dq_a } => {
            if dq_a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: dq_a.len(),
                });
            }
            let w0 = dq_a.clone().insert_row(n, 0.0);
            let w = linear_forward(problem, ctrl, traj, 0, w0, 0, None);
            Ok(VariationPath {
                start_node: 0,
                w,
                homogeneous_from: 0,
            })
        }
        VariationRequest::Dense { s, z } => {
            let k = mesh
                .node_index(*s)
                .filter(|&k| k + 1 < mesh.len())
                .ok_or(Error::PointNotInScale { t: *s })?;
            let cell = &mesh.cells[mesh.cell_of_interval[k]];
            if cell.kind != CellKind::Dense || !mesh.nodes[k].is_controlling {
                return Err(Error::WrongPointClass {
                    t: *s,
                    expected: "right-dense",
                });
            }
            let u = ctrl.on_interval(k);
            let z = problem.omega.project(z);
            let q = &traj.q[k];
            let w0 = augmented_rhs(problem, *s, q, &z) - augmented_rhs(problem, *s, q, u);
            let w = linear_forward(problem, ctrl, traj, k, w0, 0, None);
            Ok(VariationPath {
                start_node: k,
                w,
                homogeneous_from: k,
            })
        }
        VariationRequest::Scattered { r, y } => {
            let c = mesh
                .cell_starting_at(*r)
                .ok_or(Error::PointNotInScale { t: *r })?;
            let cell = mesh.cells[c];
            if cell.kind != CellKind::Scattered {
                return Err(Error::WrongPointClass {
                    t: *r,
                    expected: "right-scattered",
                });
            }
            let y = problem.omega.project(y);
            let direction = y - ctrl.cell_value(c);
            let w = linear_forward(
                problem,
                ctrl,
                traj,
                cell.first_node,
                DVector::zeros(n + 1),
                cell.end_node,
                Some(&direction),
            );
            Ok(VariationPath {
                start_node: cell.first_node,
                w,
                homogeneous_from: cell.end_node,
            })
        }
    }
}

/// Variation vector `(w(b), w⁰(b))` for `req`.
pub fn variation_endpoint(
    problem: &ControlProblem,
    ctrl: &SampledControl,
    traj: &Trajectory,
    req: &VariationRequest,
) -> Result<(DVector<f64>, f64)> {
    Ok(variation_path(problem, ctrl, traj, req)?.endpoint())
}

/// Writes `t, class, q…, q0, p…, p0` rows; the adjoint columns are omitted
/// when `adj` is `None`.
pub fn write_csv<W: Write>(traj: &Trajectory, adj: Option<&AdjointArc>, mut out: W) -> io::Result<()> {
    let n = traj.q.first().map_or(0, DVector::len);
    let mut header = vec!["t".to_string(), "class".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.push("q0".into());
    if adj.is_some() {
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.push("p0".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, node) in traj.mesh.nodes.iter().enumerate() {
        write!(out, "{:.16e},{}", node.t, node.class.label())?;
        for x in traj.q[k].iter() {
            write!(out, ",{x:.16e}")?;
        }
        write!(out, ",{:.16e}", traj.q0[k])?;
        if let Some(adj) = adj {
            for x in adj.p[k].iter() {
                write!(out, ",{x:.16e}")?;
            }
            write!(out, ",{:.16e}", adj.p0)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
