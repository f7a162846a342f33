//! Seeded problem instances: random operators and states, noisy initial
//! guesses, and the two-level transfer benchmark.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ControlField, ControlHamiltonian, HermitianOperator, StateVector, TimeGrid};
use crate::problem::ControlProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_complex(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// `(A + A^H) / 2` with entries of `A` uniform in the unit square.
pub fn random_hermitian(rng: &mut impl Rng, dim: usize) -> HermitianOperator {
    let a = DMatrix::from_fn(dim, dim, |_, _| uniform_complex(rng));
    hermitian_part(&a)
}

fn hermitian_part(a: &DMatrix<Complex64>) -> HermitianOperator {
    let h = (a + a.adjoint()).scale(0.5);
    HermitianOperator::new(h).expect("Hermitian by construction")
}

pub fn random_state(rng: &mut impl Rng, dim: usize) -> StateVector {
    let v = nalgebra::DVector::from_fn(dim, |_, _| uniform_complex(rng));
    let norm = v.norm();
    StateVector::normalized(v.unscale(norm)).expect("nonzero with probability one")
}

/// `eps_ref` plus independent uniform noise in `[-amplitude, amplitude]`.
pub fn noisy_field(eps_ref: &ControlField, amplitude: f64, seed: u64) -> ControlField {
    let mut rng = rng(seed);
    let samples = eps_ref
        .samples()
        .iter()
        .map(|e| e + amplitude * rng.random_range(-1.0..=1.0))
        .collect();
    ControlField::new(samples).expect("finite samples")
}

/// Random real combination of `I`, `mu` and `mu^2`, which commutes with `mu`.
pub fn polynomial_of(mu: &HermitianOperator, seed: u64) -> HermitianOperator {
    let mut rng = rng(seed);
    let m = mu.matrix();
    let dim = mu.dim();
    let [a, b, c]: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let p = DMatrix::<Complex64>::identity(dim, dim).scale(a) + m.scale(b) + (m * m).scale(c);
    hermitian_part(&p)
}

/// Random `dim`-level problem on a grid with `n_steps` intervals of 0.05 and
/// the measurement at 80 % of the window.
pub fn random_problem(seed: u64, dim: usize, n_steps: usize, alpha: f64) -> Result<ControlProblem> {
    let mut rng = rng(seed);
    let dt = 0.05;
    let index_t = (n_steps * 4 / 5).max(1);
    let grid = TimeGrid::new(index_t as f64 * dt, n_steps as f64 * dt, dt)?;
    let hamiltonian = ControlHamiltonian::new(random_hermitian(&mut rng, dim), random_hermitian(&mut rng, dim))?;
    let observable = random_hermitian(&mut rng, dim);
    let psi0 = random_state(&mut rng, dim);
    let eps_ref = ControlField::constant(rng.random_range(-0.2..0.2), &grid);
    ControlProblem::new(hamiltonian, observable, psi0, grid, alpha, eps_ref)
}

/// Two-level population transfer: `H0 = diag(0, 1)`, `mu = sigma_x`,
/// `O = diag(0, 1)`, `psi0 = |0>`, `T = 10`, `T_hat = 10.5`, `dt = 0.025`,
/// `eps_ref = 0`.
pub fn benchmark_problem(alpha: f64) -> Result<ControlProblem> {
    let grid = TimeGrid::new(10.0, 10.5, 0.025)?;
    ControlProblem::new(
        ControlHamiltonian::new(HermitianOperator::diagonal(&[0.0, 1.0]), HermitianOperator::pauli_x())?,
        HermitianOperator::diagonal(&[0.0, 1.0]),
        StateVector::basis(2, 0),
        grid,
        alpha,
        ControlField::zeros(&grid),
    )
}
