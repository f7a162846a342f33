//! Optimal control of finite-dimensional quantum systems with an
//! intermediate-time expectation-value objective.
//!
//! The state is propagated with a piecewise-constant field on a uniform grid,
//! the costate carries the jump `chi(T-) - chi(T+) = O psi(T)` at the
//! measurement time, and fields are improved by immediate-feedback sweeps.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod functional;
pub mod gradient;
pub mod instances;
pub mod model;
pub mod optimizer;
pub mod problem;
pub mod propagator;

pub use error::{QoctError, Result};
pub use functional::FunctionalBreakdown;
pub use model::{ControlField, ControlHamiltonian, HermitianOperator, StateTrajectory, StateVector, TimeGrid};
pub use optimizer::{optimize, OptimizationConfig, OptimizationResult};
pub use problem::ControlProblem;
pub use propagator::{CostateBoundary, CostateTrajectory, Direction, FieldPropagator};
