//! Exact-exponential time stepping for the state and costate equations.
//!
//! Each interval carries a constant field sample, so the one-step propagator
//! is `exp(-i H(eps_k) dt)`, evaluated from the Hermitian eigendecomposition of
//! `H(eps_k)`. The measurement-time source of the costate equation is never
//! discretized as a pulse: it enters as a jump between the two one-sided
//! limits stored in [`CostateTrajectory`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QoctError, Result};
use crate::model::{ControlField, ControlHamiltonian, HermitianOperator, StateTrajectory, StateVector, TimeGrid};

/// Largest TDSE residual accepted for a state trajectory fed to the costate solver.
pub const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `exp(-i H dt)`
    Forward,
    /// `exp(+i H dt)`
    Backward,
}

/// Terminal condition imposed on the costate at the measurement time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostateBoundary {
    /// `chi(T-) = O psi(T)` and `chi = 0` after `T`.
    Canonical,
    /// `chi(T) = i/(2 pi n) O psi(T)` with `n != 0`, continuous across `T`.
    Continuous(i32),
}

impl CostateBoundary {
    pub fn continuous(n: i32) -> Result<Self> {
        let boundary = Self::Continuous(n);
        boundary.validate()?;
        Ok(boundary)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Continuous(0) => Err(QoctError::InvalidParameter {
                name: "n",
                reason: "continuous costate family requires a nonzero integer".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Scalar `c` with `chi(T) = c * O psi(T)` on the side of `T` where the
    /// costate is seeded.
    pub fn seed_factor(&self) -> Complex64 {
        match *self {
            Self::Canonical => Complex64::new(1.0, 0.0),
            Self::Continuous(n) => Complex64::new(0.0, 1.0 / (2.0 * PI * f64::from(n))),
        }
    }
}

/// One-interval propagator for a fixed field sample.
#[derive(Debug, Clone)]
pub struct StepOperator {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<Complex64>,
    forward: DMatrix<Complex64>,
    backward: DMatrix<Complex64>,
    dt: f64,
}

impl StepOperator {
    pub fn new(hamiltonian: &ControlHamiltonian, eps: f64, dt: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(QoctError::NonFinite("field sample"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(QoctError::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        Ok(Self::from_matrix(hamiltonian.evaluate(eps), dt))
    }

    fn from_matrix(h: DMatrix<Complex64>, dt: f64) -> Self {
        let eigen = SymmetricEigen::new(h);
        let v = eigen.eigenvectors;
        let phases = eigen.eigenvalues.map(|lambda| Complex64::from_polar(1.0, -lambda * dt));
        let forward = &v * DMatrix::from_diagonal(&phases) * v.adjoint();
        let backward = forward.adjoint();
        Self {
            eigenvalues: eigen.eigenvalues,
            eigenvectors: v,
            forward,
            backward,
            dt,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self, direction: Direction) -> &DMatrix<Complex64> {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn apply(&self, v: &DVector<Complex64>, direction: Direction) -> DVector<Complex64> {
        self.matrix(direction) * v
    }

    /// Interval average of the interaction-picture coupling,
    /// `(1/dt) int_0^dt e^{iHs} mu e^{-iHs} ds`.
    ///
    /// This is the exact discrete control derivative: for `U = exp(-i H(eps) dt)`
    /// and `H(eps) = H0 + eps mu`, `dU/deps = -i dt U mu_avg`. It reduces to
    /// `mu` when `[H, mu] = 0` and as `dt -> 0`.
    pub fn averaged_coupling(&self, coupling: &HermitianOperator) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let mut m = v.adjoint() * coupling.matrix() * v;
        let n = m.nrows();
        for a in 0..n {
            for b in 0..n {
                let theta = (self.eigenvalues[a] - self.eigenvalues[b]) * self.dt;
                m[(a, b)] *= phase_average(theta);
            }
        }
        v * m * v.adjoint()
    }
}

/// `(1/theta) int_0^theta e^{ix} dx = e^{i theta/2} sinc(theta/2)`.
fn phase_average(theta: f64) -> Complex64 {
    let half = 0.5 * theta;
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    Complex64::from_polar(sinc, half)
}

/// Single exact-exponential step of `psi` under `H(eps)` for a time `dt`.
pub fn step(
    psi: &StateVector,
    hamiltonian: &ControlHamiltonian,
    eps: f64,
    dt: f64,
    direction: Direction,
) -> Result<StateVector> {
    if psi.dim() != hamiltonian.dim() {
        return Err(QoctError::DimensionMismatch {
            expected: hamiltonian.dim(),
            found: psi.dim(),
        });
    }
    let op = StepOperator::new(hamiltonian, eps, dt)?;
    StateVector::new(op.apply(psi.as_vector(), direction))
}

/// Step operators for every interval of a field, shared by the forward and
/// costate sweeps.
#[derive(Debug, Clone)]
pub struct FieldPropagator {
    steps: Vec<StepOperator>,
    grid: TimeGrid,
    dim: usize,
}

impl FieldPropagator {
    pub fn new(hamiltonian: &ControlHamiltonian, field: &ControlField, grid: &TimeGrid) -> Result<Self> {
        field.check_grid(grid)?;
        let steps = field
            .samples()
            .iter()
            .map(|&eps| StepOperator::new(hamiltonian, eps, grid.dt()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            steps,
            grid: *grid,
            dim: hamiltonian.dim(),
        })
    }

    /// Assembles a propagator from per-interval operators built elsewhere.
    pub(crate) fn from_steps(steps: Vec<StepOperator>, grid: &TimeGrid, dim: usize) -> Self {
        debug_assert_eq!(steps.len(), grid.n_steps());
        Self {
            steps,
            grid: *grid,
            dim,
        }
    }

    pub fn step_operator(&self, k: usize) -> &StepOperator {
        &self.steps[k]
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn forward(&self, psi0: &StateVector) -> Result<StateTrajectory> {
        if psi0.dim() != self.dim {
            return Err(QoctError::DimensionMismatch {
                expected: self.dim,
                found: psi0.dim(),
            });
        }
        if !psi0.is_normalized() {
            return Err(QoctError::NotNormalized { norm: psi0.norm() });
        }
        Ok(self.forward_unchecked(psi0))
    }

    /// Forward propagation without the normalization requirement on `psi0`.
    pub(crate) fn forward_unchecked(&self, psi0: &StateVector) -> StateTrajectory {
        StateTrajectory::new(self.run(psi0, Direction::Forward)).expect("uniform dimension")
    }

    /// Applies the interval steppers in time order, starting from `start`.
    pub(crate) fn run(&self, start: &StateVector, direction: Direction) -> Vec<StateVector> {
        let mut states = Vec::with_capacity(self.grid.n_nodes());
        let mut current = start.as_vector().clone();
        states.push(start.clone());
        for op in &self.steps {
            current = op.apply(&current, direction);
            states.push(StateVector::from_vector_unchecked(current.clone()));
        }
        states
    }

    pub fn tdse_residual(&self, traj: &StateTrajectory) -> Result<f64> {
        traj.check_grid(&self.grid)?;
        let states = traj.states();
        let mut worst = 0.0_f64;
        for (k, op) in self.steps.iter().enumerate() {
            let predicted = op.apply(states[k].as_vector(), Direction::Forward);
            worst = worst.max((states[k + 1].as_vector() - predicted).norm());
        }
        Ok(worst)
    }

    pub fn costate(
        &self,
        psi_traj: &StateTrajectory,
        observable: &HermitianOperator,
        boundary: CostateBoundary,
    ) -> Result<CostateTrajectory> {
        boundary.validate()?;
        let residual = self.tdse_residual(psi_traj)?;
        if residual.is_nan() || residual >= CONSISTENCY_TOL {
            return Err(QoctError::InconsistentTrajectory { residual });
        }
        let index_t = self.grid.index_t();
        let source = observable.apply(psi_traj.state(index_t))?;
        Ok(self.costate_from_source(source, boundary))
    }

    /// Builds the costate from `O psi(T)` alone.
    pub(crate) fn costate_from_source(&self, o_psi_t: StateVector, boundary: CostateBoundary) -> CostateTrajectory {
        let index_t = self.grid.index_t();
        let n_nodes = self.grid.n_nodes();
        let dim = o_psi_t.dim();
        let mut states = vec![StateVector::zeros(dim); n_nodes];

        let (chi_t_minus, chi_t_plus) = match boundary {
            CostateBoundary::Canonical => (o_psi_t, StateVector::zeros(dim)),
            CostateBoundary::Continuous(_) => {
                let seed = o_psi_t.scale(boundary.seed_factor());
                (seed.clone(), seed)
            }
        };
        states[index_t] = chi_t_plus.clone();

        let mut current = chi_t_minus.as_vector().clone();
        for k in (0..index_t).rev() {
            current = self.steps[k].apply(&current, Direction::Backward);
            states[k] = StateVector::from_vector_unchecked(current.clone());
        }
        if let CostateBoundary::Continuous(_) = boundary {
            let mut current = chi_t_plus.as_vector().clone();
            for k in index_t..self.grid.n_steps() {
                current = self.steps[k].apply(&current, Direction::Forward);
                states[k + 1] = StateVector::from_vector_unchecked(current.clone());
            }
        }

        CostateTrajectory {
            states,
            chi_t_minus,
            chi_t_plus,
            boundary,
            index_t,
        }
    }

    /// Largest violation of the homogeneous costate recursion
    /// `chi_k = exp(+i H_k dt) chi_{k+1}`, using the left limit `chi(T-)` in
    /// place of the node value at `T`.
    pub fn costate_residual(&self, chi: &CostateTrajectory) -> Result<f64> {
        chi.check_grid(&self.grid)?;
        let mut worst = 0.0_f64;
        for (k, op) in self.steps.iter().enumerate() {
            let later = if k + 1 == chi.index_t {
                &chi.chi_t_minus
            } else {
                &chi.states[k + 1]
            };
            let predicted = op.apply(later.as_vector(), Direction::Backward);
            worst = worst.max((chi.states[k].as_vector() - predicted).norm());
        }
        Ok(worst)
    }
}

/// Costate at every node plus both one-sided limits at the measurement time.
///
/// The node value at `T` is the right limit by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    states: Vec<StateVector>,
    chi_t_minus: StateVector,
    chi_t_plus: StateVector,
    boundary: CostateBoundary,
    index_t: usize,
}

impl CostateTrajectory {
    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &StateVector {
        &self.states[k]
    }

    pub fn chi_t_minus(&self) -> &StateVector {
        &self.chi_t_minus
    }

    pub fn chi_t_plus(&self) -> &StateVector {
        &self.chi_t_plus
    }

    pub fn boundary(&self) -> CostateBoundary {
        self.boundary
    }

    pub fn index_t(&self) -> usize {
        self.index_t
    }

    /// `||chi(T+) - chi(T-)||`.
    pub fn jump_norm(&self) -> f64 {
        (self.chi_t_plus.as_vector() - self.chi_t_minus.as_vector()).norm()
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.states.len() != grid.n_nodes() || self.index_t != grid.index_t() {
            return Err(QoctError::LengthMismatch {
                what: "costate trajectory",
                expected: grid.n_nodes(),
                found: self.states.len(),
            });
        }
        Ok(())
    }

    /// Copy with node `k` replaced; the one-sided limits are left untouched.
    pub fn with_node(&self, k: usize, state: StateVector) -> Self {
        let mut out = self.clone();
        out.states[k] = state;
        out
    }

    /// Copy with the nodes strictly after `T` multiplied by `phase` and the
    /// right limit rescaled accordingly, i.e. `chi * e^{i phi Theta(t - T)}`.
    pub fn with_post_measurement_phase(&self, phase: Complex64) -> Self {
        let mut out = self.clone();
        out.chi_t_plus = self.chi_t_minus.scale(phase);
        out.states[self.index_t] = out.chi_t_plus.clone();
        for s in out.states.iter_mut().skip(self.index_t + 1) {
            *s = s.scale(phase);
        }
        out
    }
}

pub fn propagate_forward(
    psi0: &StateVector,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<StateTrajectory> {
    FieldPropagator::new(hamiltonian, field, grid)?.forward(psi0)
}

pub fn propagate_costate(
    psi_traj: &StateTrajectory,
    observable: &HermitianOperator,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
    boundary: CostateBoundary,
) -> Result<CostateTrajectory> {
    FieldPropagator::new(hamiltonian, field, grid)?.costate(psi_traj, observable, boundary)
}

/// `max_k ||psi_{k+1} - exp(-i H(eps_k) dt) psi_k||`.
pub fn tdse_residual(
    traj: &StateTrajectory,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<f64> {
    FieldPropagator::new(hamiltonian, field, grid)?.tdse_residual(traj)
}

pub fn costate_residual(
    chi: &CostateTrajectory,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<f64> {
    FieldPropagator::new(hamiltonian, field, grid)?.costate_residual(chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rabi_hamiltonian() -> ControlHamiltonian {
        ControlHamiltonian::new(HermitianOperator::zeros(2), HermitianOperator::pauli_x()).unwrap()
    }

    fn two_level() -> ControlHamiltonian {
        ControlHamiltonian::new(HermitianOperator::diagonal(&[0.0, 1.0]), HermitianOperator::pauli_x()).unwrap()
    }

    #[test]
    fn pi_half_rotation_about_x() {
        // exp(-i theta sx) = cos(theta) I - i sin(theta) sx
        let psi = StateVector::basis(2, 0);
        let out = step(&psi, &rabi_hamiltonian(), FRAC_PI_2, 1.0, Direction::Forward).unwrap();
        let expected = [c(0.0, 0.0), c(0.0, -1.0)];
        for (a, b) in out.amplitudes().iter().zip(expected) {
            assert!((a - b).norm() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn stationary_eigenstate_keeps_zero_phase() {
        let h = ControlHamiltonian::new(HermitianOperator::diagonal(&[0.0, 1.0]), HermitianOperator::zeros(2)).unwrap();
        let psi = StateVector::basis(2, 0);
        let out = step(&psi, &h, 0.0, 0.731, Direction::Forward).unwrap();
        assert!(out.distance(&psi).unwrap() < 1e-15);
    }

    #[test]
    fn backward_inverts_forward() {
        let h = two_level();
        let psi = StateVector::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let there = step(&psi, &h, 0.37, 0.2, Direction::Forward).unwrap();
        let back = step(&there, &h, 0.37, 0.2, Direction::Backward).unwrap();
        assert!(back.distance(&psi).unwrap() < 1e-13);
        assert!((there.norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn step_rejects_bad_input() {
        let h = two_level();
        let psi = StateVector::basis(2, 0);
        assert!(step(&psi, &h, f64::NAN, 0.1, Direction::Forward).is_err());
        assert!(step(&psi, &h, 0.0, 0.0, Direction::Forward).is_err());
        assert!(step(&StateVector::basis(3, 0), &h, 0.0, 0.1, Direction::Forward).is_err());
    }

    #[test]
    fn constant_drive_follows_rabi_formula() {
        let grid = TimeGrid::new(FRAC_PI_2, 1.25 * FRAC_PI_2, FRAC_PI_2 / 200.0).unwrap();
        let field = ControlField::constant(1.0, &grid);
        let traj = propagate_forward(&StateVector::basis(2, 0), &field, &rabi_hamiltonian(), &grid).unwrap();
        for (k, psi) in traj.states().iter().enumerate() {
            let t = grid.time(k);
            assert!((psi.populations()[1] - t.sin().powi(2)).abs() < 1e-12);
        }
        let at_t = traj.state(grid.index_t());
        let expected = StateVector::from_slice(&[c(0.0, 0.0), c(0.0, -1.0)]).unwrap();
        assert!(at_t.distance(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn eigenstate_picks_up_closed_form_phase() {
        let h =
            ControlHamiltonian::new(HermitianOperator::diagonal(&[0.0, 1.0]), HermitianOperator::pauli_x()).unwrap();
        let grid = TimeGrid::new(1.0, 1.5, 0.01).unwrap();
        let traj = propagate_forward(&StateVector::basis(2, 1), &ControlField::zeros(&grid), &h, &grid).unwrap();
        for (k, psi) in traj.states().iter().enumerate() {
            let t = grid.time(k);
            let expected = StateVector::from_slice(&[c(0.0, 0.0), Complex64::from_polar(1.0, -t)]).unwrap();
            assert!(psi.distance(&expected).unwrap() < 1e-13);
        }
    }

    #[test]
    fn forward_requires_normalized_start_and_matching_field() {
        let grid = TimeGrid::new(1.0, 1.5, 0.1).unwrap();
        let h = two_level();
        let unnormalized = StateVector::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(propagate_forward(&unnormalized, &ControlField::zeros(&grid), &h, &grid).is_err());
        let short = ControlField::new(vec![0.0; 3]).unwrap();
        assert!(matches!(
            propagate_forward(&StateVector::basis(2, 0), &short, &h, &grid),
            Err(QoctError::LengthMismatch { .. })
        ));
    }

    fn sample_problem() -> (ControlHamiltonian, TimeGrid, ControlField, StateTrajectory) {
        let h = two_level();
        let grid = TimeGrid::new(1.0, 1.25, 0.05).unwrap();
        let field = ControlField::from_fn(&grid, |t| 0.3 * (2.0 * t).sin() + 0.1).unwrap();
        let traj = propagate_forward(&StateVector::basis(2, 0), &field, &h, &grid).unwrap();
        (h, grid, field, traj)
    }

    #[test]
    fn propagated_trajectory_has_zero_residual() {
        let (h, grid, field, traj) = sample_problem();
        assert_eq!(tdse_residual(&traj, &field, &h, &grid).unwrap(), 0.0);
    }

    #[test]
    fn corrupted_node_shows_in_residual() {
        let (h, grid, field, traj) = sample_problem();
        let bad = traj.with_state(7, StateVector::basis(2, 1)).unwrap();
        assert!(tdse_residual(&bad, &field, &h, &grid).unwrap() > 0.1);
        assert!(matches!(
            propagate_costate(
                &bad,
                &HermitianOperator::identity(2),
                &field,
                &h,
                &grid,
                CostateBoundary::Canonical
            ),
            Err(QoctError::InconsistentTrajectory { .. })
        ));
    }

    #[test]
    fn canonical_costate_jumps_to_o_psi() {
        let h = rabi_hamiltonian();
        let grid = TimeGrid::new(1.0, 1.25, 0.25).unwrap();
        let field = ControlField::zeros(&grid);
        let psi0 = StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let traj = propagate_forward(&psi0, &field, &h, &grid).unwrap();
        let o = HermitianOperator::diagonal(&[0.0, 1.0]);
        let chi = propagate_costate(&traj, &o, &field, &h, &grid, CostateBoundary::Canonical).unwrap();
        assert_eq!(chi.chi_t_minus().amplitudes(), &[c(0.0, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
        assert_eq!(chi.chi_t_plus().amplitudes(), &[c(0.0, 0.0), c(0.0, 0.0)]);
        for k in grid.index_t()..grid.n_nodes() {
            assert_eq!(chi.state(k).norm(), 0.0);
        }
        assert!((chi.state(0).norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(costate_residual(&chi, &field, &h, &grid).unwrap(), 0.0);
    }

    #[test]
    fn zero_observable_gives_zero_costate() {
        let (h, grid, field, traj) = sample_problem();
        let chi = propagate_costate(
            &traj,
            &HermitianOperator::zeros(2),
            &field,
            &h,
            &grid,
            CostateBoundary::Canonical,
        )
        .unwrap();
        assert!(chi.states().iter().all(|s| s.norm() == 0.0));
        assert_eq!(chi.chi_t_minus().norm(), 0.0);
    }

    #[test]
    fn continuous_costate_has_no_jump() {
        let (h, grid, field, traj) = sample_problem();
        let o = HermitianOperator::identity(2);
        let chi = propagate_costate(&traj, &o, &field, &h, &grid, CostateBoundary::Continuous(1)).unwrap();
        let expected = traj.state(grid.index_t()).scale(c(0.0, 1.0 / (2.0 * PI)));
        assert!(chi.chi_t_plus().distance(&expected).unwrap() < 1e-16);
        assert_eq!(chi.chi_t_minus(), chi.chi_t_plus());
        assert_eq!(chi.jump_norm(), 0.0);
        assert!(costate_residual(&chi, &field, &h, &grid).unwrap() < 1e-12);
    }

    #[test]
    fn continuous_family_rejects_zero() {
        let (h, grid, field, traj) = sample_problem();
        assert!(CostateBoundary::continuous(0).is_err());
        assert!(propagate_costate(
            &traj,
            &HermitianOperator::identity(2),
            &field,
            &h,
            &grid,
            CostateBoundary::Continuous(0)
        )
        .is_err());
    }

    #[test]
    fn boundary_serializes_as_config_shape() {
        assert_eq!(
            serde_json::to_string(&CostateBoundary::Canonical).unwrap(),
            "\"canonical\""
        );
        assert_eq!(
            serde_json::to_string(&CostateBoundary::Continuous(-1)).unwrap(),
            "{\"continuous\":-1}"
        );
        let b: CostateBoundary = serde_json::from_str("{\"continuous\": 2}").unwrap();
        assert_eq!(b, CostateBoundary::Continuous(2));
    }

    #[test]
    fn averaged_coupling_reduces_to_coupling_when_commuting() {
        let h = rabi_hamiltonian();
        let op = StepOperator::new(&h, 0.8, 0.3).unwrap();
        let avg = op.averaged_coupling(h.coupling());
        assert!((avg - h.coupling().matrix()).camax() < 1e-15);
    }

    #[test]
    fn averaged_coupling_matches_fd_derivative_of_step() {
        // dU/deps = -i dt U mu_avg
        let h = two_level();
        let (eps, dt, d) = (0.4, 0.7, 1e-6);
        let op = StepOperator::new(&h, eps, dt).unwrap();
        let plus = StepOperator::new(&h, eps + d, dt).unwrap();
        let minus = StepOperator::new(&h, eps - d, dt).unwrap();
        let fd = (plus.matrix(Direction::Forward) - minus.matrix(Direction::Forward)) / c(2.0 * d, 0.0);
        let analytic = op.matrix(Direction::Forward) * op.averaged_coupling(h.coupling()) * c(0.0, -dt);
        assert!((fd - analytic).camax() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hermitian(n: usize) -> impl Strategy<Value = HermitianOperator> {
            prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| {
                let entries: Vec<Complex64> = v.into_iter().map(|(re, im)| c(re, im)).collect();
                let a = DMatrix::from_row_slice(n, n, &entries);
                HermitianOperator::new((&a + a.adjoint()) * c(0.5, 0.0)).unwrap()
            })
        }

        fn state(n: usize) -> impl Strategy<Value = StateVector> {
            prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
                .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-2))
                .prop_map(|v| {
                    let d = DVector::from_iterator(v.len(), v.into_iter().map(|(re, im)| c(re, im)));
                    StateVector::normalized(d.unscale(d.norm())).unwrap()
                })
        }

        proptest! {
            #[test]
            fn step_is_unitary_and_reversible(
                drift in hermitian(3), coupling in hermitian(3), psi in state(3),
                eps in -2.0..2.0f64, dt in 0.001..1.0f64,
            ) {
                let h = ControlHamiltonian::new(drift, coupling).unwrap();
                let fwd = step(&psi, &h, eps, dt, Direction::Forward).unwrap();
                prop_assert!((fwd.norm() - 1.0).abs() < 1e-13);
                let back = step(&fwd, &h, eps, dt, Direction::Backward).unwrap();
                prop_assert!(back.distance(&psi).unwrap() < 1e-13);
            }

            #[test]
            fn conjugate_backward_stepper_reproduces_conjugate_trajectory(
                drift in hermitian(3), coupling in hermitian(3), psi in state(3),
                samples in prop::collection::vec(-1.0..1.0f64, 30),
            ) {
                let h = ControlHamiltonian::new(drift, coupling).unwrap();
                let grid = TimeGrid::new(0.5, 0.75, 0.025).unwrap();
                let field = ControlField::on_grid(samples, &grid).unwrap();
                let traj = propagate_forward(&psi, &field, &h, &grid).unwrap();
                let conj = FieldPropagator::new(&h.conj(), &field, &grid).unwrap().run(&psi.conj(), Direction::Backward);
                for (a, b) in traj.states().iter().zip(&conj) {
                    prop_assert!(a.conj().distance(b).unwrap() < 1e-12);
                }
            }
        }
    }
}
