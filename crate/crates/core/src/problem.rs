use crate::error::{QoctError, Result};
use crate::model::{ControlField, ControlHamiltonian, HermitianOperator, StateVector, TimeGrid};

/// Everything that defines the objective: dynamics, observable, initial
/// state, time grid, penalty weight and reference field.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    hamiltonian: ControlHamiltonian,
    observable: HermitianOperator,
    initial_state: StateVector,
    grid: TimeGrid,
    alpha: f64,
    eps_ref: ControlField,
}

impl ControlProblem {
    pub fn new(
        hamiltonian: ControlHamiltonian,
        observable: HermitianOperator,
        initial_state: StateVector,
        grid: TimeGrid,
        alpha: f64,
        eps_ref: ControlField,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        for found in [observable.dim(), initial_state.dim()] {
            if found != dim {
                return Err(QoctError::DimensionMismatch { expected: dim, found });
            }
        }
        if !initial_state.is_normalized() {
            return Err(QoctError::NotNormalized {
                norm: initial_state.norm(),
            });
        }
        check_alpha(alpha)?;
        eps_ref.check_grid(&grid)?;
        Ok(Self {
            hamiltonian,
            observable,
            initial_state,
            grid,
            alpha,
            eps_ref,
        })
    }

    pub fn hamiltonian(&self) -> &ControlHamiltonian {
        &self.hamiltonian
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eps_ref(&self) -> &ControlField {
        &self.eps_ref
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn with_observable(&self, observable: HermitianOperator) -> Result<Self> {
        Self::new(
            self.hamiltonian.clone(),
            observable,
            self.initial_state.clone(),
            self.grid,
            self.alpha,
            self.eps_ref.clone(),
        )
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(QoctError::InvalidParameter {
            name: "alpha",
            reason: format!("penalty factor must be positive, got {alpha}"),
        });
    }
    Ok(())
}
