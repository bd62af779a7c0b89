//! Optimal sampled-data control problems on time scales.
//!
//! The state evolves on a time scale `𝕋` while the control only changes at
//! the controlling times of a coarser scale `𝕋₁ ⊆ 𝕋` and is held in between.
//! This crate provides
//!
//! - [`timescale`]: bounded time scales, forward jumps, the sampling map `Φ`,
//!   delta integrals and the generalized exponential;
//! - [`problem`]: problem definitions and the finite parameterization of
//!   sampled controls;
//! - [`integrate`]: hybrid forward/backward integration of the state, the
//!   adjoint and the variation vectors;
//! - [`pmp`]: the Hamiltonian and a residual report for every
//!   maximum-principle necessary condition;
//! - [`solver`]: the closed-form backward sweep for the consumption model and
//!   a projected-gradient direct solver.

pub mod error;
pub mod integrate;
pub mod pmp;
pub mod problem;
pub mod scalar;
pub mod solver;
pub mod timescale;

pub use error::{Error, Result};
pub use integrate::{AdjointArc, Trajectory, VariationRequest};
pub use pmp::{PmpReport, Tolerances};
pub use problem::{ControlBox, ControlProblem, DynamicsSpec, Mesh, SampledControl, TerminalSpec};
pub use solver::{SolveResult, SolverKind};
pub use timescale::{GridNode, PointClass, PointKind, ScaleGenerator, TimeScale};

pub use nalgebra::{DMatrix, DVector};
