//! Immediate-feedback sweeps for the coupled state/costate/field system.
//!
//! Each iteration runs a canonical backward costate pass with the current
//! field, then a forward pass that rebuilds the field sample by sample from the
//! field equation using the freshly propagated `psi_k` and the stored
//! `chi_k`. For a positive semidefinite observable the discrete objective is
//! non-decreasing across iterations up to terms of order `dt^2 |d eps|^2`.

use serde::{Deserialize, Serialize};

use crate::error::{QoctError, Result};
use crate::functional::{eval_total_with, FunctionalBreakdown};
use crate::gradient::{control_sensitivity, stationarity_residual_with};
use crate::model::{ControlField, StateTrajectory, StateVector};
use crate::problem::ControlProblem;
use crate::propagator::{CostateBoundary, CostateTrajectory, Direction, FieldPropagator, StepOperator};

/// Per-iteration decrease of `J_total` tolerated before the run is flagged
/// as non-monotonic.
pub const MONOTONIC_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    pub max_iters: usize,
    /// Stop once `|J_total(n) - J_total(n-1)| < j_tol`.
    pub j_tol: f64,
    /// Required stationarity residual for `converged = true`.
    pub stationarity_tol: f64,
    pub initial_field: ControlField,
}

impl OptimizationConfig {
    pub fn new(initial_field: ControlField) -> Self {
        Self {
            max_iters: 500,
            j_tol: 1e-12,
            stationarity_tol: 1e-6,
            initial_field,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(QoctError::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        for (name, value) in [("j_tol", self.j_tol), ("stationarity_tol", self.stationarity_tol)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(QoctError::InvalidParameter {
                    name,
                    reason: format!("tolerance must be positive, got {value}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub final_field: Vec<f64>,
    /// Breakdown of the initial field followed by one entry per iteration.
    pub j_history: Vec<FunctionalBreakdown>,
    pub final_fidelity: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_stationarity_residual: f64,
    /// Largest single-iteration drop of `J_total` (0 when monotonic).
    pub max_j_decrease: f64,
    /// `false` if any iteration lowered `J_total` by more than [`MONOTONIC_SLACK`].
    pub monotonic: bool,
    /// Largest TDSE residual over all iterates.
    pub max_tdse_residual: f64,
}

impl OptimizationResult {
    pub fn final_breakdown(&self) -> &FunctionalBreakdown {
        self.j_history.last().expect("history is never empty")
    }
}

/// State, costate and field of one iterate, sharing a single set of step operators.
struct Iterate {
    field: ControlField,
    propagator: FieldPropagator,
    psi: StateTrajectory,
    chi: CostateTrajectory,
    breakdown: FunctionalBreakdown,
}

impl Iterate {
    fn new(
        problem: &ControlProblem,
        field: ControlField,
        propagator: FieldPropagator,
        psi: StateTrajectory,
    ) -> Result<Self> {
        let chi = propagator.costate(&psi, problem.observable(), CostateBoundary::Canonical)?;
        let breakdown = eval_total_with(problem, &propagator, &psi, &chi, &field)?;
        Ok(Self {
            field,
            propagator,
            psi,
            chi,
            breakdown,
        })
    }

    fn stationarity_residual(&self, problem: &ControlProblem) -> Result<f64> {
        stationarity_residual_with(
            &self.propagator,
            problem.hamiltonian(),
            &self.psi,
            &self.chi,
            &self.field,
            problem.eps_ref(),
            problem.alpha(),
        )
    }

    /// Forward sweep that rebuilds the field from the stored costate.
    fn sweep(&self, problem: &ControlProblem) -> Result<Self> {
        let grid = problem.grid();
        let h = problem.hamiltonian();
        let index_t = grid.index_t();
        let mut samples = Vec::with_capacity(grid.n_steps());
        let mut steps = Vec::with_capacity(grid.n_steps());
        let mut states = Vec::with_capacity(grid.n_nodes());
        let mut psi = problem.initial_state().clone();
        states.push(psi.clone());

        for k in 0..grid.n_steps() {
            let reference = problem.eps_ref().get(k);
            let eps = if k < index_t {
                let drive = control_sensitivity(self.propagator.step_operator(k), h, self.chi.state(k), &psi);
                reference + drive / problem.alpha()
            } else {
                reference
            };
            let op = StepOperator::new(h, eps, grid.dt())?;
            psi = StateVector::new(op.apply(psi.as_vector(), Direction::Forward))?;
            states.push(psi.clone());
            samples.push(eps);
            steps.push(op);
        }

        let field = ControlField::on_grid(samples, grid)?;
        let propagator = FieldPropagator::from_steps(steps, grid, h.dim());
        Self::new(problem, field, propagator, StateTrajectory::new(states)?)
    }
}

pub fn optimize(problem: &ControlProblem, config: &OptimizationConfig) -> Result<OptimizationResult> {
    config.validate()?;
    let grid = problem.grid();
    config.initial_field.check_grid(grid)?;

    let propagator = FieldPropagator::new(problem.hamiltonian(), &config.initial_field, grid)?;
    let psi = propagator.forward(problem.initial_state())?;
    let mut current = Iterate::new(problem, config.initial_field.clone(), propagator, psi)?;

    let mut history = vec![current.breakdown];
    let mut max_j_decrease = 0.0_f64;
    let mut max_tdse_residual = current.propagator.tdse_residual(&current.psi)?;
    let mut converged = false;
    let mut residual = None;
    let mut iterations_run = 0;

    while iterations_run < config.max_iters {
        let next = current.sweep(problem)?;
        iterations_run += 1;
        let delta = next.breakdown.j_total - current.breakdown.j_total;
        max_j_decrease = max_j_decrease.max(-delta);
        max_tdse_residual = max_tdse_residual.max(next.propagator.tdse_residual(&next.psi)?);
        history.push(next.breakdown);
        current = next;
        residual = None;

        if delta.abs() < config.j_tol {
            let r = current.stationarity_residual(problem)?;
            residual = Some(r);
            if r < config.stationarity_tol {
                converged = true;
                break;
            }
        }
    }

    let final_stationarity_residual = match residual {
        Some(r) => r,
        None => current.stationarity_residual(problem)?,
    };

    Ok(OptimizationResult {
        final_fidelity: current.breakdown.j_opt,
        final_field: current.field.into_samples(),
        j_history: history,
        iterations_run,
        converged,
        final_stationarity_residual,
        max_j_decrease,
        monotonic: max_j_decrease <= MONOTONIC_SLACK,
        max_tdse_residual,
    })
}
