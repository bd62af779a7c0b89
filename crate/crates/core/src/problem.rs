//! Problem definitions: dynamics templates, the control box, terminal
//! conditions, and the cell-wise parameterization of sampled controls.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timescale::{build_grid_with_breaks, GridNode, TimeScale, MEMBERSHIP_TOL};

/// Tolerance for accepting a control as a member of the box.
pub const BOX_TOL: f64 = 1e-12;

/// Scalar linear dynamics with quadratic running cost:
/// `f = A q + B u`, `f⁰ = ½ Σ wᵢ (qᵢ − targetᵢ)² + ½ Σ ρⱼ uⱼ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuadratic {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub state_weight: Vec<f64>,
    pub control_weight: Vec<f64>,
    #[serde(default)]
    pub state_target: Vec<f64>,
}

/// Built-in dynamics templates with exact first partials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum DynamicsSpec {
    /// `f = u q`, `f⁰ = (u − 1) q`: minimizing `∫ f⁰` maximizes consumption.
    Consumption,
    LinearQuadratic(LinearQuadratic),
}

/// Dynamics, running cost and all first partials at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsEval {
    pub f: DVector<f64>,
    pub f0: f64,
    pub df_dq: DMatrix<f64>,
    pub df_du: DMatrix<f64>,
    pub df0_dq: DVector<f64>,
    pub df0_du: DVector<f64>,
}

impl DynamicsSpec {
    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsSpec::Consumption => 1,
            DynamicsSpec::LinearQuadratic(lq) => lq.a.len(),
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            DynamicsSpec::Consumption => 1,
            DynamicsSpec::LinearQuadratic(lq) => lq.b.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self) -> Result<()> {
        if let DynamicsSpec::LinearQuadratic(lq) = self {
            let n = lq.a.len();
            let m = self.control_dim();
            let bad = n == 0
                || m == 0
                || lq.a.iter().any(|row| row.len() != n)
                || lq.b.len() != n
                || lq.b.iter().any(|row| row.len() != m)
                || lq.state_weight.len() != n
                || lq.control_weight.len() != m
                || !(lq.state_target.is_empty() || lq.state_target.len() == n);
            if bad {
                return Err(Error::InvalidProblem(
                    "inconsistent linear_quadratic dimensions".into(),
                ));
            }
        }
        Ok(())
    }

    /// Dynamics and running cost only.
    pub fn rhs(&self, _t: f64, q: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, f64) {
        match self {
            DynamicsSpec::Consumption => {
                let (q, u) = (q[0], u[0]);
                (DVector::from_element(1, u * q), (u - 1.0) * q)
            }
            DynamicsSpec::LinearQuadratic(lq) => {
                let n = lq.a.len();
                let f = DVector::from_fn(n, |i, _| {
                    let aq: f64 = lq.a[i].iter().zip(q.iter()).map(|(a, q)| a * q).sum();
                    let bu: f64 = lq.b[i].iter().zip(u.iter()).map(|(b, u)| b * u).sum();
                    aq + bu
                });
                let mut f0 = 0.0;
                for i in 0..n {
                    let dq = q[i] - lq.state_target.get(i).copied().unwrap_or(0.0);
                    f0 += 0.5 * lq.state_weight[i] * dq * dq;
                }
                for (j, w) in lq.control_weight.iter().enumerate() {
                    f0 += 0.5 * w * u[j] * u[j];
                }
                (f, f0)
            }
        }
    }

    pub fn eval(&self, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DynamicsEval {
        let (f, f0) = self.rhs(t, q, u);
        match self {
            DynamicsSpec::Consumption => {
                let (qv, uv) = (q[0], u[0]);
                DynamicsEval {
                    f,
                    f0,
                    df_dq: DMatrix::from_element(1, 1, uv),
                    df_du: DMatrix::from_element(1, 1, qv),
                    df0_dq: DVector::from_element(1, uv - 1.0),
                    df0_du: DVector::from_element(1, qv),
                }
            }
            DynamicsSpec::LinearQuadratic(lq) => {
                let n = lq.a.len();
                let m = self.control_dim();
                DynamicsEval {
                    f,
                    f0,
                    df_dq: DMatrix::from_fn(n, n, |i, j| lq.a[i][j]),
                    df_du: DMatrix::from_fn(n, m, |i, j| lq.b[i][j]),
                    df0_dq: DVector::from_fn(n, |i, _| {
                        lq.state_weight[i]
                            * (q[i] - lq.state_target.get(i).copied().unwrap_or(0.0))
                    }),
                    df0_du: DVector::from_fn(m, |j, _| lq.control_weight[j] * u[j]),
                }
            }
        }
    }
}

/// Componentwise box `lo ≤ u ≤ hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ControlBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidProblem("box bounds differ in length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidProblem("empty control box".into()));
        }
        Ok(ControlBox { lo, hi })
    }

    pub fn unit() -> Self {
        ControlBox {
            lo: vec![0.0],
            hi: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lo[i], self.hi[i]))
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .enumerate()
                .all(|(i, &x)| x >= self.lo[i] - tol && x <= self.hi[i] + tol)
    }

    pub fn midpoint(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| 0.5 * (self.lo[i] + self.hi[i]))
    }

    /// Uniform tensor grid with `per_dim` points per coordinate.
    pub fn grid(&self, per_dim: usize) -> Vec<DVector<f64>> {
        let per_dim = per_dim.max(2);
        let m = self.dim();
        let total = per_dim.pow(m as u32);
        (0..total)
            .map(|mut idx| {
                DVector::from_fn(m, |i, _| {
                    let k = idx % per_dim;
                    idx /= per_dim;
                    self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (per_dim - 1) as f64
                })
            })
            .collect()
    }

    /// Vertices plus the centre and the midpoints of every coordinate edge.
    pub fn vertices_and_midpoints(&self) -> Vec<DVector<f64>> {
        self.grid(3)
    }
}

/// Terminal conditions `g(q(a), q(b)) ∈ S` for the supported cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalSpec {
    FixedInitialFreeFinal { q_a: Vec<f64> },
    FixedBoth { q_a: Vec<f64>, q_b: Vec<f64> },
    Periodic,
}

impl TerminalSpec {
    pub fn initial_state(&self) -> Option<DVector<f64>> {
        match self {
            TerminalSpec::FixedInitialFreeFinal { q_a } | TerminalSpec::FixedBoth { q_a, .. } => {
                Some(DVector::from_column_slice(q_a))
            }
            TerminalSpec::Periodic => None,
        }
    }

    /// Whether the transversality conditions force `p⁰ ≠ 0`.
    pub fn forces_normality(&self) -> bool {
        matches!(self, TerminalSpec::FixedInitialFreeFinal { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    /// Sampling interval `[r, σ₁(r))` of a right-scattered controlling time.
    Scattered,
    /// Refinement cell of a right-dense portion of the controlling scale.
    Dense,
}

/// A maximal time range on which a sampled control is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCell {
    pub start: f64,
    pub end: f64,
    pub kind: CellKind,
    pub first_node: usize,
    pub end_node: usize,
}

/// Evaluation grid together with the control cells it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<GridNode>,
    pub cells: Vec<ControlCell>,
    /// For each grid interval `[t_k, t_{k+1})`, the cell it belongs to.
    pub cell_of_interval: Vec<usize>,
}

impl Mesh {
    fn new(nodes: Vec<GridNode>, control_scale: &TimeScale) -> Result<Self> {
        let last = nodes.len() - 1;
        if !nodes[0].is_controlling {
            return Err(Error::InvalidProblem(
                "the first node is not a controlling time".into(),
            ));
        }
        let starts: Vec<usize> = (0..last).filter(|&k| nodes[k].is_controlling).collect();
        let mut cells = Vec::with_capacity(starts.len());
        let mut cell_of_interval = vec![0; last];
        for (c, &k) in starts.iter().enumerate() {
            let end_node = starts.get(c + 1).copied().unwrap_or(last);
            let jump = control_scale.jump(nodes[k].t)?;
            let kind = if jump.class.is_scattered() {
                CellKind::Scattered
            } else {
                CellKind::Dense
            };
            cells.push(ControlCell {
                start: nodes[k].t,
                end: nodes[end_node].t,
                kind,
                first_node: k,
                end_node,
            });
            cell_of_interval[k..end_node].fill(c);
        }
        Ok(Mesh {
            nodes,
            cells,
            cell_of_interval,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n.t)
    }

    /// Index of the node at time `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let k = self.nodes.partition_point(|n| n.t < t - MEMBERSHIP_TOL);
        (k < self.nodes.len() && (self.nodes[k].t - t).abs() <= MEMBERSHIP_TOL).then_some(k)
    }

    /// Cell holding the control seen at `t ∈ [a, b)`.
    pub fn cell_at(&self, t: f64) -> Option<usize> {
        let idx = self.cells.partition_point(|c| c.start <= t + MEMBERSHIP_TOL);
        if idx == 0 {
            return None;
        }
        let c = idx - 1;
        (t < self.cells[c].end - MEMBERSHIP_TOL).then_some(c)
    }

    /// Cell starting exactly at the controlling time `t`.
    pub fn cell_starting_at(&self, t: f64) -> Option<usize> {
        self.cell_at(t)
            .filter(|&c| (self.cells[c].start - t).abs() <= MEMBERSHIP_TOL)
    }
}

/// The optimal sampled-data control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub state_scale: TimeScale,
    pub control_scale: TimeScale,
    pub a: f64,
    pub b: f64,
    pub dynamics: DynamicsSpec,
    pub omega: ControlBox,
    pub terminal: TerminalSpec,
    pub free_final_time: bool,
}

impl ControlProblem {
    /// Validates the data and appends `b` to the controlling scale when it is
    /// missing, so that the last sampling interval closes at the final time.
    pub fn new(
        state_scale: TimeScale,
        control_scale: TimeScale,
        dynamics: DynamicsSpec,
        omega: ControlBox,
        terminal: TerminalSpec,
    ) -> Result<Self> {
        dynamics.validate()?;
        let a = state_scale.start();
        let b = state_scale.end();
        if !(a < b) {
            return Err(Error::InvalidProblem("empty time window".into()));
        }
        let control_scale = control_scale.clip(a, b)?.with_point(b)?;
        if (control_scale.start() - a).abs() > MEMBERSHIP_TOL {
            return Err(Error::InvalidProblem(format!(
                "controlling scale starts at {} instead of {a}",
                control_scale.start()
            )));
        }
        if !control_scale.is_subset_of(&state_scale) {
            return Err(Error::InvalidProblem(
                "controlling scale is not contained in the state scale".into(),
            ));
        }
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        if omega.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: omega.dim(),
            });
        }
        let check = |v: &Vec<f64>| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                })
            }
        };
        match &terminal {
            TerminalSpec::FixedInitialFreeFinal { q_a } => check(q_a)?,
            TerminalSpec::FixedBoth { q_a, q_b } => {
                check(q_a)?;
                check(q_b)?;
            }
            TerminalSpec::Periodic => {}
        }
        Ok(ControlProblem {
            state_scale,
            control_scale,
            a,
            b,
            dynamics,
            omega,
            terminal,
            free_final_time: false,
        })
    }

    pub fn with_free_final_time(mut self, free: bool) -> Self {
        self.free_final_time = free;
        self
    }

    /// The consumption model on `state_scale` with `q(a) = 1`, `u ∈ [0, 1]`.
    pub fn consumption(state_scale: TimeScale, control_scale: TimeScale) -> Result<Self> {
        ControlProblem::new(
            state_scale,
            control_scale,
            DynamicsSpec::Consumption,
            ControlBox::unit(),
            TerminalSpec::FixedInitialFreeFinal { q_a: vec![1.0] },
        )
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn is_consumption(&self) -> bool {
        self.dynamics == DynamicsSpec::Consumption
    }

    /// Dynamics, running cost and partials with dimension and box checks.
    pub fn eval_dynamics(
        &self,
        t: f64,
        q: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DynamicsEval> {
        if q.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                got: q.len(),
            });
        }
        if u.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.control_dim(),
                got: u.len(),
            });
        }
        if !self.omega.contains(u, BOX_TOL) {
            return Err(Error::ConstraintViolation {
                value: u.iter().copied().collect(),
            });
        }
        Ok(self.dynamics.eval(t, q, u))
    }

    /// Grid with step at most `h` plus extra breakpoints, and its control cells.
    pub fn mesh(&self, h: f64, breaks: &[f64]) -> Result<Arc<Mesh>> {
        let nodes = build_grid_with_breaks(&self.state_scale, &self.control_scale, h, breaks)?;
        Ok(Arc::new(Mesh::new(nodes, &self.control_scale)?))
    }

    /// Default integration step: `10⁻³ (b − a)`.
    pub fn default_step(&self) -> f64 {
        1e-3 * (self.b - self.a)
    }

    /// `u^Φ(t)`: the control held at `t ∈ [a, b) ∩ 𝕋`.
    pub fn control_value<'c>(&self, ctrl: &'c SampledControl, t: f64) -> Result<&'c DVector<f64>> {
        if !self.state_scale.contains(t) || t >= self.b - MEMBERSHIP_TOL {
            return Err(Error::PointNotInScale { t });
        }
        ctrl.value_at(t)
    }
}

/// Control values, one per cell of a [`Mesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledControl {
    mesh: Arc<Mesh>,
    values: Vec<DVector<f64>>,
}

impl SampledControl {
    pub fn constant(mesh: Arc<Mesh>, omega: &ControlBox, u: &DVector<f64>) -> Self {
        let v = omega.project(u);
        let values = vec![v; mesh.cells.len()];
        SampledControl { mesh, values }
    }

    /// Builds a control by evaluating `f` on every cell, projected onto `omega`.
    pub fn from_cells<F>(mesh: Arc<Mesh>, omega: &ControlBox, mut f: F) -> Self
    where
        F: FnMut(&ControlCell) -> DVector<f64>,
    {
        let values = mesh.cells.iter().map(|c| omega.project(&f(c))).collect();
        SampledControl { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn cell_value(&self, cell: usize) -> &DVector<f64> {
        &self.values[cell]
    }

    pub fn set_cell_value(&mut self, cell: usize, v: &DVector<f64>, omega: &ControlBox) {
        self.values[cell] = omega.project(v);
    }

    /// Control held on grid interval `[t_k, t_{k+1})`.
    pub fn on_interval(&self, k: usize) -> &DVector<f64> {
        &self.values[self.mesh.cell_of_interval[k]]
    }

    pub fn value_at(&self, t: f64) -> Result<&DVector<f64>> {
        self.mesh
            .cell_at(t)
            .map(|c| &self.values[c])
            .ok_or(Error::PointNotInScale { t })
    }

    /// Values at right-scattered controlling times.
    pub fn scattered_values(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.mesh
            .cells
            .iter()
            .zip(&self.values)
            .filter(|(c, _)| c.kind == CellKind::Scattered)
            .map(|(c, v)| (c.start, v))
    }

    /// Piecewise-constant table on right-dense portions: `(start, end, value)`.
    pub fn dense_values(&self) -> impl Iterator<Item = (f64, f64, &DVector<f64>)> {
        self.mesh
            .cells
            .iter()
            .zip(&self.values)
            .filter(|(c, _)| c.kind == CellKind::Dense)
            .map(|(c, v)| (c.start, c.end, v))
    }
}
