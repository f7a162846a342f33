//! The three-term objective `J = J_opt + J_cost + J_TDSE` on discrete trajectories.
//!
//! `J_cost` runs over `[0, T)` and `J_TDSE` over `[0, T_hat)`. Both use
//! left-Riemann sums over intervals, which are exact for piecewise-constant
//! fields.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QoctError, Result};
use crate::model::{expectation, ControlField, ControlHamiltonian, HermitianOperator, StateTrajectory, TimeGrid};
use crate::problem::{check_alpha, ControlProblem};
use crate::propagator::{CostateTrajectory, Direction, FieldPropagator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalBreakdown {
    pub j_opt: f64,
    pub j_cost: f64,
    pub j_tdse: f64,
    pub j_total: f64,
}

impl FunctionalBreakdown {
    pub fn new(j_opt: f64, j_cost: f64, j_tdse: f64) -> Self {
        Self {
            j_opt,
            j_cost,
            j_tdse,
            j_total: j_opt + j_cost + j_tdse,
        }
    }
}

/// `<psi(T)|O|psi(T)>`.
pub fn eval_j_opt(traj: &StateTrajectory, observable: &HermitianOperator, grid: &TimeGrid) -> Result<f64> {
    traj.check_grid(grid)?;
    expectation(observable, traj.state(grid.index_t()))
}

/// `-alpha * sum_{k < index_T} (eps_k - eps_ref_k)^2 dt`.
pub fn eval_j_cost(field: &ControlField, eps_ref: &ControlField, alpha: f64, grid: &TimeGrid) -> Result<f64> {
    check_alpha(alpha)?;
    field.check_grid(grid)?;
    eps_ref.check_grid(grid)?;
    let sum: f64 = field.samples()[..grid.index_t()]
        .iter()
        .zip(eps_ref.samples())
        .map(|(e, r)| (e - r).powi(2))
        .sum();
    Ok(-alpha * sum * grid.dt())
}

/// `-2 Im sum_k <chi_k | (i D psi)_k - H(eps_k) psi_k> dt` over all intervals.
///
/// The discrete residual `(i D psi)_k - H psi_k` is
/// `i (exp(+i H_k dt) psi_{k+1} - psi_k) / dt`, which vanishes identically on
/// trajectories produced by the exact-exponential stepper.
pub fn eval_j_tdse(
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<f64> {
    let propagator = FieldPropagator::new(hamiltonian, field, grid)?;
    j_tdse_with(&propagator, psi_traj, chi_traj)
}

pub(crate) fn j_tdse_with(
    propagator: &FieldPropagator,
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
) -> Result<f64> {
    let grid = propagator.grid();
    psi_traj.check_grid(grid)?;
    chi_traj.check_grid(grid)?;
    if psi_traj.dim() != chi_traj.state(0).dim() {
        return Err(QoctError::DimensionMismatch {
            expected: psi_traj.dim(),
            found: chi_traj.state(0).dim(),
        });
    }
    let dt = grid.dt();
    let i_over_dt = Complex64::new(0.0, 1.0 / dt);
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..grid.n_steps() {
        let chi = chi_traj.state(k).as_vector();
        if chi.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            continue;
        }
        let pulled_back = propagator
            .step_operator(k)
            .apply(psi_traj.state(k + 1).as_vector(), Direction::Backward);
        let residual: DVector<Complex64> = (pulled_back - psi_traj.state(k).as_vector()) * i_over_dt;
        total += chi.dotc(&residual) * dt;
    }
    Ok(-2.0 * total.im)
}

/// Full breakdown of `J` for one `(psi, chi, eps)` triple.
pub fn eval_total(
    problem: &ControlProblem,
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
) -> Result<FunctionalBreakdown> {
    let propagator = FieldPropagator::new(problem.hamiltonian(), field, problem.grid())?;
    eval_total_with(problem, &propagator, psi_traj, chi_traj, field)
}

pub(crate) fn eval_total_with(
    problem: &ControlProblem,
    propagator: &FieldPropagator,
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
) -> Result<FunctionalBreakdown> {
    let grid = problem.grid();
    let j_opt = eval_j_opt(psi_traj, problem.observable(), grid)?;
    let j_cost = eval_j_cost(field, problem.eps_ref(), problem.alpha(), grid)?;
    let j_tdse = j_tdse_with(propagator, psi_traj, chi_traj)?;
    Ok(FunctionalBreakdown::new(j_opt, j_cost, j_tdse))
}
