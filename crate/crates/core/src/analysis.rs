//! Numerical checks of the costate boundary behaviour at the measurement
//! time, the continuity of the extremal field, and the independence of the
//! conjugate wave-function equations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QoctError, Result};
use crate::gradient::control_sensitivity;
use crate::model::{
    commutes, ControlField, ControlHamiltonian, HermitianOperator, StateTrajectory, StateVector, TimeGrid,
};
use crate::problem::ControlProblem;
use crate::propagator::{CostateBoundary, CostateTrajectory, Direction, FieldPropagator};

/// Tolerance of the `[O, mu] = 0` predicate (max-modulus entry).
pub const COMMUTATOR_TOL: f64 = 1e-12;

/// State and costate of a problem for one fixed field.
#[derive(Debug, Clone)]
pub struct Solution {
    problem: ControlProblem,
    field: ControlField,
    propagator: FieldPropagator,
    psi: StateTrajectory,
    chi: CostateTrajectory,
}

impl Solution {
    pub fn new(problem: &ControlProblem, field: &ControlField, boundary: CostateBoundary) -> Result<Self> {
        let propagator = FieldPropagator::new(problem.hamiltonian(), field, problem.grid())?;
        let psi = propagator.forward(problem.initial_state())?;
        let chi = propagator.costate(&psi, problem.observable(), boundary)?;
        Ok(Self {
            problem: problem.clone(),
            field: field.clone(),
            propagator,
            psi,
            chi,
        })
    }

    pub fn canonical(problem: &ControlProblem, field: &ControlField) -> Result<Self> {
        Self::new(problem, field, CostateBoundary::Canonical)
    }

    pub fn continuous(problem: &ControlProblem, field: &ControlField, n: i32) -> Result<Self> {
        Self::new(problem, field, CostateBoundary::continuous(n)?)
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn field(&self) -> &ControlField {
        &self.field
    }

    pub fn psi(&self) -> &StateTrajectory {
        &self.psi
    }

    pub fn chi(&self) -> &CostateTrajectory {
        &self.chi
    }

    pub fn psi_at_measurement(&self) -> &StateVector {
        self.psi.state(self.problem.grid().index_t())
    }

    /// Field from the extremal field law at every sample, using the current
    /// state and costate. Samples at or after `T` see the right limit `chi(T+)`.
    pub fn extremal_field(&self) -> Vec<f64> {
        let h = self.problem.hamiltonian();
        let alpha = self.problem.alpha();
        (0..self.problem.grid().n_steps())
            .map(|k| {
                let drive = control_sensitivity(
                    self.propagator.step_operator(k),
                    h,
                    self.chi.state(k),
                    self.psi.state(k),
                );
                self.problem.eps_ref().get(k) + drive / alpha
            })
            .collect()
    }
}

/// Relative jump induced by multiplying the costate after `T` with `e^{i phi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDefect {
    pub phi: f64,
    pub relative_jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub boundary: CostateBoundary,
    /// `||chi(T+) - chi(T-)||`.
    #[serde(rename = "jump_norm_at_T")]
    pub jump_norm_at_t: f64,
    /// `||O psi(T)||`.
    #[serde(rename = "O_psi_norm")]
    pub o_psi_norm: f64,
    /// Distance of the seeded limit from its prescribed value.
    #[serde(rename = "costate_matches_O_psi")]
    pub costate_matches_o_psi: f64,
    /// Field law at `T-` with the plain coupling: `eps_ref(T) + Im <chi(T-)|mu|psi(T)> / alpha`.
    pub field_left_limit: f64,
    /// Field law at `T+`: `eps_ref(T) + Im <chi(T+)|mu|psi(T)> / alpha`.
    pub field_right_limit: f64,
    /// `|eps(T-) - eps_ref(T)|`.
    pub field_left_limit_gap: f64,
    /// `max_{k >= index_T} |eps_k - eps_ref_k|` for the extremal field law.
    pub post_measurement_field_gap: f64,
    pub commutator_condition_holds: bool,
    /// Largest violation of the homogeneous costate recursion away from `T`.
    pub homogeneous_residual: f64,
    pub phase_defect: Option<PhaseDefect>,
}

fn field_law_at_t(solution: &Solution, chi: &StateVector) -> Result<f64> {
    let h = solution.problem.hamiltonian();
    let psi_t = solution.psi_at_measurement();
    let mu_psi = h.coupling().apply(psi_t)?;
    let drive = chi.as_vector().dotc(mu_psi.as_vector()).im;
    let index_t = solution.problem.grid().index_t();
    Ok(solution.problem.eps_ref().get(index_t) + drive / solution.problem.alpha())
}

fn build_report(solution: &Solution) -> Result<ContinuityReport> {
    let problem = &solution.problem;
    let grid = problem.grid();
    let index_t = grid.index_t();
    let chi = &solution.chi;
    let o_psi = problem.observable().apply(solution.psi_at_measurement())?;
    let seeded = o_psi.scale(chi.boundary().seed_factor());
    let left = field_law_at_t(solution, chi.chi_t_minus())?;
    let right = field_law_at_t(solution, chi.chi_t_plus())?;
    let reference = problem.eps_ref().get(index_t);
    let extremal = solution.extremal_field();
    let post_gap = (index_t..grid.n_steps())
        .map(|k| (extremal[k] - problem.eps_ref().get(k)).abs())
        .fold(0.0, f64::max);

    Ok(ContinuityReport {
        boundary: chi.boundary(),
        jump_norm_at_t: chi.jump_norm(),
        o_psi_norm: o_psi.norm(),
        costate_matches_o_psi: chi.chi_t_minus().distance(&seeded)?,
        field_left_limit: left,
        field_right_limit: right,
        field_left_limit_gap: (left - reference).abs(),
        post_measurement_field_gap: post_gap,
        commutator_condition_holds: commutes(problem.observable(), problem.hamiltonian().coupling(), COMMUTATOR_TOL)?,
        homogeneous_residual: solution.propagator.costate_residual(chi)?,
        phase_defect: None,
    })
}

fn require_canonical(solution: &Solution) -> Result<()> {
    match solution.chi.boundary() {
        CostateBoundary::Canonical => Ok(()),
        found => Err(QoctError::BoundaryMode {
            expected: "canonical",
            found,
        }),
    }
}

pub fn check_canonical_jump(solution: &Solution) -> Result<ContinuityReport> {
    require_canonical(solution)?;
    build_report(solution)
}

pub fn check_field_continuity(solution: &Solution) -> Result<ContinuityReport> {
    require_canonical(solution)?;
    build_report(solution)
}

/// Builds the `Continuous(n)` costate for the given trajectory and probes the
/// phase `phi = pi (2n - 1)`, which is not a multiple of `2 pi`.
#[allow(clippy::too_many_arguments)]
pub fn check_continuous_family(
    psi_traj: &StateTrajectory,
    observable: &HermitianOperator,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
    alpha: f64,
    eps_ref: &ControlField,
    n: i32,
) -> Result<ContinuityReport> {
    let boundary = CostateBoundary::continuous(n)?;
    let problem = ControlProblem::new(
        hamiltonian.clone(),
        observable.clone(),
        psi_traj.state(0).clone(),
        *grid,
        alpha,
        eps_ref.clone(),
    )?;
    let propagator = FieldPropagator::new(hamiltonian, field, grid)?;
    let chi = propagator.costate(psi_traj, observable, boundary)?;
    let solution = Solution {
        problem,
        field: field.clone(),
        propagator,
        psi: psi_traj.clone(),
        chi,
    };
    let mut report = build_report(&solution)?;
    report.phase_defect = Some(phase_defect(&solution.chi, PI * f64::from(2 * n - 1)));
    Ok(report)
}

/// Relative jump of `chi * e^{i phi Theta(t - T)}` at `T`, measured on the
/// vectors when the costate is nonzero there.
pub fn phase_defect(chi: &CostateTrajectory, phi: f64) -> PhaseDefect {
    let phase = Complex64::from_polar(1.0, phi);
    let scale = chi.chi_t_minus().norm();
    let relative_jump = if scale > 0.0 {
        chi.with_post_measurement_phase(phase).jump_norm() / scale
    } else {
        (phase - 1.0).norm()
    };
    PhaseDefect { phi, relative_jump }
}

/// `max_k ||Phi_k - beta Psi_k^*||`, where `Psi` solves the Schrodinger
/// equation from `psi0` and `Phi` solves the sign-flipped equation from
/// `beta psi0^*`.
pub fn check_conjugate_independence_scaled(
    psi0: &StateVector,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
    beta: Complex64,
) -> Result<f64> {
    let psi = FieldPropagator::new(hamiltonian, field, grid)?.forward(psi0)?;
    let flipped = FieldPropagator::new(&hamiltonian.conj(), field, grid)?;
    let phi = flipped.run(&psi0.conj().scale(beta), Direction::Backward);
    Ok(psi
        .states()
        .iter()
        .zip(&phi)
        .map(|(p, f)| (f.as_vector() - p.conj().scale(beta).as_vector()).norm())
        .fold(0.0, f64::max))
}

pub fn check_conjugate_independence(
    psi0: &StateVector,
    field: &ControlField,
    hamiltonian: &ControlHamiltonian,
    grid: &TimeGrid,
) -> Result<f64> {
    check_conjugate_independence_scaled(psi0, field, hamiltonian, grid, Complex64::new(1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Stationary problem whose state at `T` is `psi`.
    fn frozen(
        psi: StateVector,
        observable: HermitianOperator,
        coupling: HermitianOperator,
        alpha: f64,
    ) -> ControlProblem {
        let grid = TimeGrid::new(1.0, 1.5, 0.1).unwrap();
        let dim = psi.dim();
        ControlProblem::new(
            ControlHamiltonian::new(HermitianOperator::zeros(dim), coupling).unwrap(),
            observable,
            psi,
            grid,
            alpha,
            ControlField::zeros(&grid),
        )
        .unwrap()
    }

    fn solve(p: &ControlProblem) -> Solution {
        Solution::canonical(p, &ControlField::zeros(p.grid())).unwrap()
    }

    #[test]
    fn canonical_jump_equals_o_psi_norm() {
        let psi = StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let p = frozen(
            psi,
            HermitianOperator::diagonal(&[0.0, 1.0]),
            HermitianOperator::pauli_x(),
            1.0,
        );
        let report = check_canonical_jump(&solve(&p)).unwrap();
        assert!((report.jump_norm_at_t - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(report.costate_matches_o_psi < 1e-12);
        assert!(report.homogeneous_residual < 1e-12);
    }

    #[test]
    fn kernel_state_and_identity_observable() {
        let p = frozen(
            StateVector::basis(2, 0),
            HermitianOperator::diagonal(&[0.0, 1.0]),
            HermitianOperator::pauli_x(),
            1.0,
        );
        assert_eq!(check_canonical_jump(&solve(&p)).unwrap().jump_norm_at_t, 0.0);
        let p = p.with_observable(HermitianOperator::identity(2)).unwrap();
        assert!((check_canonical_jump(&solve(&p)).unwrap().jump_norm_at_t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_commuting_left_limit_gap() {
        let psi = StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).unwrap();
        for alpha in [1.0, 4.0] {
            let p = frozen(
                psi.clone(),
                HermitianOperator::diagonal(&[0.0, 1.0]),
                HermitianOperator::pauli_x(),
                alpha,
            );
            let report = check_field_continuity(&solve(&p)).unwrap();
            assert!(!report.commutator_condition_holds);
            assert!((report.field_left_limit_gap - 0.5 / alpha).abs() < 1e-15);
            assert_eq!(report.field_right_limit, 0.0);
            assert_eq!(report.post_measurement_field_gap, 0.0);
        }
    }

    #[test]
    fn commuting_pairs_close_the_gap() {
        let psi = StateVector::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let o = HermitianOperator::diagonal(&[0.0, 1.0]);
        for (obs, mu) in [
            (HermitianOperator::identity(2), HermitianOperator::pauli_x()),
            (o.clone(), o.clone()),
        ] {
            let p = frozen(psi.clone(), obs, mu, 1.0);
            let report = check_field_continuity(&solve(&p)).unwrap();
            assert!(report.commutator_condition_holds);
            assert!(report.field_left_limit_gap < 1e-10);
        }
    }

    #[test]
    fn continuous_family_is_continuous() {
        let p = instances::benchmark_problem(1.0).unwrap();
        let field = instances::noisy_field(p.eps_ref(), 0.3, 11);
        let psi = FieldPropagator::new(p.hamiltonian(), &field, p.grid())
            .unwrap()
            .forward(p.initial_state())
            .unwrap();
        let identity = HermitianOperator::identity(2);
        for n in [1, 2, -1] {
            let r = check_continuous_family(&psi, &identity, &field, p.hamiltonian(), p.grid(), 1.0, p.eps_ref(), n)
                .unwrap();
            assert_eq!(r.jump_norm_at_t, 0.0);
            assert_eq!(r.costate_matches_o_psi, 0.0);
            assert!(r.homogeneous_residual < 1e-12, "{}", r.homogeneous_residual);
            let defect = r.phase_defect.unwrap();
            assert!((defect.relative_jump - 2.0).abs() < 1e-14);
        }
        let r1 =
            check_continuous_family(&psi, &identity, &field, p.hamiltonian(), p.grid(), 1.0, p.eps_ref(), 1).unwrap();
        let index_t = p.grid().index_t();
        let seed = psi.state(index_t).scale(c(0.0, 1.0 / (2.0 * PI)));
        let chi = propagate(&psi, &field, &p, 1);
        assert!(chi.chi_t_minus().distance(&seed).unwrap() < 1e-16);
        let chi2 = propagate(&psi, &field, &p, 2);
        assert!(chi2.chi_t_minus().distance(&seed.scale(c(0.5, 0.0))).unwrap() < 1e-16);
        assert!(r1.o_psi_norm > 0.0);
        assert!(
            check_continuous_family(&psi, &identity, &field, p.hamiltonian(), p.grid(), 1.0, p.eps_ref(), 0).is_err()
        );
    }

    fn propagate(psi: &StateTrajectory, field: &ControlField, p: &ControlProblem, n: i32) -> CostateTrajectory {
        FieldPropagator::new(p.hamiltonian(), field, p.grid())
            .unwrap()
            .costate(psi, &HermitianOperator::identity(2), CostateBoundary::Continuous(n))
            .unwrap()
    }

    #[test]
    fn phase_defect_pi_gives_two() {
        let p = frozen(
            StateVector::basis(2, 1),
            HermitianOperator::diagonal(&[0.0, 1.0]),
            HermitianOperator::pauli_x(),
            1.0,
        );
        let solution = solve(&p);
        assert!((phase_defect(solution.chi(), PI).relative_jump - 2.0).abs() < 1e-15);
        assert!(phase_defect(solution.chi(), 2.0 * PI).relative_jump < 1e-15);
    }

    #[test]
    fn canonical_mode_is_required() {
        let p = frozen(
            StateVector::basis(2, 1),
            HermitianOperator::diagonal(&[0.0, 1.0]),
            HermitianOperator::pauli_x(),
            1.0,
        );
        let s = Solution::continuous(&p, &ControlField::zeros(p.grid()), 1).unwrap();
        assert!(matches!(check_canonical_jump(&s), Err(QoctError::BoundaryMode { .. })));
        assert!(matches!(
            check_field_continuity(&s),
            Err(QoctError::BoundaryMode { .. })
        ));
    }

    #[test]
    fn eigenstate_conjugate_has_closed_form() {
        let grid = TimeGrid::new(2.0, 2.5, 0.05).unwrap();
        let h =
            ControlHamiltonian::new(HermitianOperator::diagonal(&[0.3, 1.0]), HermitianOperator::pauli_x()).unwrap();
        let field = ControlField::zeros(&grid);
        let flipped = FieldPropagator::new(&h.conj(), &field, &grid).unwrap();
        let phi = flipped.run(&StateVector::basis(2, 1), Direction::Backward);
        for (k, state) in phi.iter().enumerate() {
            let expected = Complex64::from_polar(1.0, grid.time(k));
            assert!((state.amplitudes()[1] - expected).norm() < 1e-13);
            assert_eq!(state.amplitudes()[0], c(0.0, 0.0));
        }
        let dev = check_conjugate_independence(&StateVector::basis(2, 1), &field, &h, &grid).unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn complex_hamiltonian_conjugate_independence() {
        let h = ControlHamiltonian::new(HermitianOperator::pauli_y(), HermitianOperator::pauli_x()).unwrap();
        let grid = TimeGrid::new(2.0, 2.5, 0.05).unwrap();
        let field = ControlField::from_fn(&grid, |t| t.sin()).unwrap();
        let psi0 = StateVector::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert!(check_conjugate_independence(&psi0, &field, &h, &grid).unwrap() < 1e-12);
        assert!(check_conjugate_independence_scaled(&psi0, &field, &h, &grid, c(0.0, 2.0)).unwrap() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_instances_satisfy_checks(seed in any::<u64>(), dim in 2usize..5) {
            let p = instances::random_problem(seed, dim, 60, 1.0).unwrap();
            let field = instances::noisy_field(p.eps_ref(), 0.5, seed ^ 1);
            let solution = Solution::canonical(&p, &field).unwrap();
            let report = check_canonical_jump(&solution).unwrap();
            prop_assert!(report.costate_matches_o_psi < 1e-12);
            prop_assert!((report.jump_norm_at_t - report.o_psi_norm).abs() < 1e-12);
            prop_assert!(solution.chi().chi_t_plus().as_vector().iter().all(|z| *z == c(0.0, 0.0)));
            prop_assert_eq!(report.post_measurement_field_gap, 0.0);
            let dev = check_conjugate_independence_scaled(p.initial_state(), &field, p.hamiltonian(), p.grid(), c(0.0, 2.0)).unwrap();
            prop_assert!(dev < 1e-12);
        }

        #[test]
        fn commutator_predicate_controls_the_gap(seed in any::<u64>(), commuting in any::<bool>()) {
            let mut p = instances::random_problem(seed, 3, 40, 1.0).unwrap();
            if commuting {
                p = p.with_observable(instances::polynomial_of(p.hamiltonian().coupling(), seed)).unwrap();
            }
            let field = instances::noisy_field(p.eps_ref(), 0.5, seed);
            let report = check_field_continuity(&Solution::canonical(&p, &field).unwrap()).unwrap();
            prop_assert_eq!(report.commutator_condition_holds, commuting);
            if commuting {
                prop_assert!(report.field_left_limit_gap < 1e-10);
            }
        }
    }
}
