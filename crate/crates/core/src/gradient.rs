//! Derivative of the discrete reduced functional with respect to the field
//! samples, its central finite-difference oracle, and the stationarity
//! residual of the field equation.
//!
//! The reduced functional eliminates the Schrodinger constraint by forward
//! propagation, `j(eps) = <psi(T)|O|psi(T)> + J_cost(eps)`. With the canonical
//! costate, `chi_k = exp(+i H_k dt) chi_{k+1}` and `chi(T-) = O psi(T)`, its
//! exact derivative is
//!
//! ```text
//! dj/deps_k = 2 dt [ Im <chi_k| mu_k |psi_k> - alpha (eps_k - eps_ref_k) ]   (k < index_T)
//! dj/deps_k = 0                                                             (k >= index_T)
//! ```
//!
//! The cost integral stops at `T`, so samples after the measurement time do
//! not enter `j` at all. `mu_k` is the interval-averaged coupling of
//! [`StepOperator::averaged_coupling`](crate::propagator::StepOperator::averaged_coupling).
//! `mu_k -> dH/deps` as `dt -> 0`; using the averaged form makes the discrete
//! gradient exact rather than first-order in `dt`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QoctError, Result};
use crate::functional::eval_j_cost;
use crate::model::{expectation, ControlField, ControlHamiltonian, StateTrajectory, StateVector, TimeGrid};
use crate::problem::{check_alpha, ControlProblem};
use crate::propagator::{CostateBoundary, CostateTrajectory, Direction, FieldPropagator, StepOperator};

/// Default central-difference probe.
pub const DEFAULT_PROBE_STEP: f64 = 1e-5;

/// Largest analytic/FD relative error accepted by gradient checks.
pub const GRADIENT_REL_TOL: f64 = 1e-6;

/// Floor on the gradient scale used as the relative-error denominator.
const REL_ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub finite_diff: Vec<f64>,
    /// `max_k |analytic_k - fd_k| / max(1e-12, |fd_k|)`.
    pub max_rel_error: f64,
    /// `max_k |analytic_k - fd_k| / max_k |fd_k|`.
    pub normwise_rel_error: f64,
    pub probe_step: f64,
}

impl GradientReport {
    pub fn new(analytic: Vec<f64>, finite_diff: Vec<f64>, probe_step: f64) -> Self {
        let scale = finite_diff.iter().fold(0.0, |m: f64, f| m.max(f.abs()));
        let pairs = || analytic.iter().zip(&finite_diff);
        let max_rel_error = pairs()
            .map(|(a, f)| (a - f).abs() / f.abs().max(REL_ERROR_FLOOR))
            .fold(0.0, f64::max);
        let normwise_rel_error = pairs().map(|(a, f)| (a - f).abs()).fold(0.0, f64::max) / scale.max(REL_ERROR_FLOOR);
        Self {
            analytic,
            finite_diff,
            max_rel_error,
            normwise_rel_error,
            probe_step,
        }
    }

    pub fn passes(&self) -> bool {
        self.max_rel_error < GRADIENT_REL_TOL
    }
}

/// `Im <chi_k| mu_k |psi_k>` for interval `k`.
pub fn control_sensitivity(
    op: &StepOperator,
    hamiltonian: &ControlHamiltonian,
    chi_k: &StateVector,
    psi_k: &StateVector,
) -> f64 {
    let mu = op.averaged_coupling(hamiltonian.coupling());
    chi_k.as_vector().dotc(&(mu * psi_k.as_vector())).im
}

fn require_canonical(chi: &CostateTrajectory) -> Result<()> {
    match chi.boundary() {
        CostateBoundary::Canonical => Ok(()),
        found => Err(QoctError::BoundaryMode {
            expected: "canonical",
            found,
        }),
    }
}

pub fn analytic_gradient(
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
    eps_ref: &ControlField,
    alpha: f64,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let propagator = FieldPropagator::new(hamiltonian, field, grid)?;
    analytic_gradient_with(&propagator, hamiltonian, psi_traj, chi_traj, field, eps_ref, alpha)
}

pub(crate) fn analytic_gradient_with(
    propagator: &FieldPropagator,
    hamiltonian: &ControlHamiltonian,
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
    eps_ref: &ControlField,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    require_canonical(chi_traj)?;
    let grid = propagator.grid();
    psi_traj.check_grid(grid)?;
    chi_traj.check_grid(grid)?;
    eps_ref.check_grid(grid)?;
    let dt = grid.dt();
    Ok((0..grid.n_steps())
        .map(|k| {
            if k >= grid.index_t() {
                return 0.0;
            }
            let cost = -alpha * (field.get(k) - eps_ref.get(k));
            let drive = control_sensitivity(
                propagator.step_operator(k),
                hamiltonian,
                chi_traj.state(k),
                psi_traj.state(k),
            );
            2.0 * dt * (drive + cost)
        })
        .collect())
}

/// `max_{k < index_T} |eps_k - eps_ref_k - Im <chi_k|mu_k|psi_k> / alpha|`.
pub fn stationarity_residual(
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
    eps_ref: &ControlField,
    alpha: f64,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<f64> {
    let propagator = FieldPropagator::new(hamiltonian, field, grid)?;
    stationarity_residual_with(&propagator, hamiltonian, psi_traj, chi_traj, field, eps_ref, alpha)
}

pub(crate) fn stationarity_residual_with(
    propagator: &FieldPropagator,
    hamiltonian: &ControlHamiltonian,
    psi_traj: &StateTrajectory,
    chi_traj: &CostateTrajectory,
    field: &ControlField,
    eps_ref: &ControlField,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    require_canonical(chi_traj)?;
    let grid = propagator.grid();
    psi_traj.check_grid(grid)?;
    chi_traj.check_grid(grid)?;
    eps_ref.check_grid(grid)?;
    Ok((0..grid.index_t())
        .map(|k| {
            let drive = control_sensitivity(
                propagator.step_operator(k),
                hamiltonian,
                chi_traj.state(k),
                psi_traj.state(k),
            );
            (field.get(k) - eps_ref.get(k) - drive / alpha).abs()
        })
        .fold(0.0, f64::max))
}

/// Reduced functional `j(eps) = J_opt(psi[eps]) + J_cost(eps)` with the state
/// obtained by forward propagation.
pub fn reduced_functional(problem: &ControlProblem, field: &ControlField) -> Result<f64> {
    let grid = problem.grid();
    let propagator = FieldPropagator::new(problem.hamiltonian(), field, grid)?;
    let psi = propagator.forward(problem.initial_state())?;
    let j_opt = expectation(problem.observable(), psi.state(grid.index_t()))?;
    Ok(j_opt + eval_j_cost(field, problem.eps_ref(), problem.alpha(), grid)?)
}

/// Central difference of the reduced functional in sample `k`.
pub fn fd_gradient(problem: &ControlProblem, field: &ControlField, k: usize, h: f64) -> Result<f64> {
    check_probe(h)?;
    if k >= field.len() {
        return Err(QoctError::IndexOutOfRange {
            index: k,
            len: field.len(),
        });
    }
    let plus = reduced_functional(problem, &field.perturbed(k, h))?;
    let minus = reduced_functional(problem, &field.perturbed(k, -h))?;
    Ok((plus - minus) / (2.0 * h))
}

fn check_probe(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(QoctError::InvalidParameter {
            name: "h",
            reason: format!("probe step must be positive, got {h}"),
        });
    }
    Ok(())
}

/// Central differences for every sample.
///
/// Produces the values of [`fd_gradient`] for each `k` without subtracting two
/// nearly equal functional values. With `psi+` and `psi-` the states at `T`
/// under the two probes, `j(+) - j(-) = Re <psi+ + psi-| O |psi+ - psi->` and
/// the cost difference is `-4 alpha dt h (eps_k - eps_ref_k)`. Both sums are
/// carried through the unperturbed step operators after interval `k`.
pub fn fd_gradient_all(problem: &ControlProblem, field: &ControlField, h: f64) -> Result<Vec<f64>> {
    check_probe(h)?;
    let grid = problem.grid();
    let index_t = grid.index_t();
    let dt = grid.dt();
    let base = FieldPropagator::new(problem.hamiltonian(), field, grid)?;
    let psi = base.forward(problem.initial_state())?;
    let observable = problem.observable().matrix();

    (0..grid.n_steps())
        .into_par_iter()
        .map(|k| {
            if k >= index_t {
                return Ok(0.0);
            }
            let eps = field.get(k);
            let state = psi.state(k).as_vector();
            let plus = StepOperator::new(problem.hamiltonian(), eps + h, dt)?.apply(state, Direction::Forward);
            let minus = StepOperator::new(problem.hamiltonian(), eps - h, dt)?.apply(state, Direction::Forward);
            let mut sum = &plus + &minus;
            let mut diff = plus - minus;
            for j in k + 1..index_t {
                let step = base.step_operator(j);
                sum = step.apply(&sum, Direction::Forward);
                diff = step.apply(&diff, Direction::Forward);
            }
            let d_opt = sum.dotc(&(observable * &diff)).re;
            let d_cost = -4.0 * problem.alpha() * dt * h * (eps - problem.eps_ref().get(k));
            Ok((d_opt + d_cost) / (2.0 * h))
        })
        .collect()
}

/// Analytic gradient against central differences at probe step `h`.
pub fn gradient_report(problem: &ControlProblem, field: &ControlField, h: f64) -> Result<GradientReport> {
    let grid = problem.grid();
    let propagator = FieldPropagator::new(problem.hamiltonian(), field, grid)?;
    let psi = propagator.forward(problem.initial_state())?;
    let chi = propagator.costate(&psi, problem.observable(), CostateBoundary::Canonical)?;
    let analytic = analytic_gradient_with(
        &propagator,
        problem.hamiltonian(),
        &psi,
        &chi,
        field,
        problem.eps_ref(),
        problem.alpha(),
    )?;
    let finite_diff = fd_gradient_all(problem, field, h)?;
    Ok(GradientReport::new(analytic, finite_diff, h))
}
