//! Domain types shared by every stage of the solver: state vectors, Hermitian
//! operators, bilinear control Hamiltonians, the two-horizon time grid and the
//! piecewise-constant control field.
//!
//! All types are immutable once constructed. Constructors validate their
//! invariants so downstream code can rely on them without re-checking.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QoctError, Result};

/// Maximum elementwise deviation `|A - A^H|` accepted for Hermitian operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Maximum `| ||psi|| - 1 |` accepted for physical states.
pub const NORM_TOL: f64 = 1e-10;

/// Relative tolerance used when checking that `T` and `T_hat` sit on grid nodes.
pub const GRID_COMMENSURABILITY_TOL: f64 = 1e-12;

/// A finite complex amplitude vector.
///
/// Physical wavefunctions are additionally normalized; costates are not, so
/// normalization is checked by [`StateVector::normalized`] rather than by
/// [`StateVector::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<Complex64>);

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QoctError::NonFinite("state vector"));
        }
        Ok(Self(amplitudes))
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amplitudes))
    }

    /// Builds a state and requires unit norm within [`NORM_TOL`].
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let state = Self::new(amplitudes)?;
        let norm = state.norm();
        if (norm - 1.0).abs() >= NORM_TOL {
            return Err(QoctError::NotNormalized { norm });
        }
        Ok(state)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    /// Computational basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub(crate) fn from_vector_unchecked(v: DVector<Complex64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORM_TOL
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.0
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    /// Elementwise complex conjugate.
    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self(&self.0 * factor)
    }

    /// Occupation probabilities `|c_i|^2` in the computational basis.
    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Euclidean distance `||self - other||`.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok((&self.0 - &other.0).norm())
    }
}

/// `<a|b>`: conjugate-linear in `a`, linear in `b`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.0.dotc(&b.0))
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(QoctError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// A square complex matrix that is Hermitian to [`HERMITIAN_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(DMatrix<Complex64>);

impl HermitianOperator {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        Self::named(entries, "operator")
    }

    /// Like [`HermitianOperator::new`] but reports `what` in validation errors.
    pub fn named(entries: DMatrix<Complex64>, what: &'static str) -> Result<Self> {
        if !entries.is_square() {
            return Err(QoctError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QoctError::NonFinite(what));
        }
        let deviation = hermitian_deviation(&entries);
        if deviation >= HERMITIAN_TOL {
            return Err(QoctError::NotHermitian { what, deviation });
        }
        Ok(Self(entries))
    }

    /// Row-major construction from nested rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(QoctError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self::diagonal(&[0.0, 0.0]).with_entries(&[((0, 1), 1.0.into()), ((1, 0), 1.0.into())])
    }

    pub fn pauli_y() -> Self {
        Self::diagonal(&[0.0, 0.0])
            .with_entries(&[((0, 1), Complex64::new(0.0, -1.0)), ((1, 0), Complex64::new(0.0, 1.0))])
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    fn with_entries(mut self, entries: &[((usize, usize), Complex64)]) -> Self {
        for &((i, j), z) in entries {
            self.0[(i, j)] = z;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// Elementwise conjugate; Hermitian whenever `self` is.
    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector(&self.0 * &psi.0))
    }
}

fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `Re <psi|O|psi>`, rejecting results whose imaginary part exceeds round-off.
pub fn expectation(op: &HermitianOperator, psi: &StateVector) -> Result<f64> {
    check_dim(op.dim(), psi.dim())?;
    let value = psi.0.dotc(&(&op.0 * &psi.0));
    let scale = (op.0.camax() * psi.0.norm_squared() * op.dim() as f64).max(1.0);
    if value.im.abs() >= HERMITIAN_TOL * scale {
        return Err(QoctError::ComplexExpectation { imag: value.im });
    }
    Ok(value.re)
}

/// `true` iff `||O mu - mu O||_max < tol`.
pub fn commutes(op: &HermitianOperator, coupling: &HermitianOperator, tol: f64) -> Result<bool> {
    check_dim(op.dim(), coupling.dim())?;
    let commutator = &op.0 * &coupling.0 - &coupling.0 * &op.0;
    Ok(commutator.camax() < tol)
}

/// Bilinear control Hamiltonian `H(eps) = H0 + eps * mu`, so `dH/deps = mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlHamiltonian {
    drift: HermitianOperator,
    coupling: HermitianOperator,
}

impl ControlHamiltonian {
    pub fn new(drift: HermitianOperator, coupling: HermitianOperator) -> Result<Self> {
        check_dim(drift.dim(), coupling.dim())?;
        Ok(Self { drift, coupling })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &HermitianOperator {
        &self.drift
    }

    /// The control derivative `dH/deps`, independent of the field.
    pub fn coupling(&self) -> &HermitianOperator {
        &self.coupling
    }

    pub fn evaluate(&self, eps: f64) -> DMatrix<Complex64> {
        &self.drift.0 + &self.coupling.0 * Complex64::new(eps, 0.0)
    }

    /// Hamiltonian of the complex-conjugated Schrodinger equation, `H0* + eps mu*`.
    pub fn conj(&self) -> Self {
        Self {
            drift: self.drift.conj(),
            coupling: self.coupling.conj(),
        }
    }
}

/// Uniform grid on `[0, T_hat]` with the measurement time `T` on an interior node.
///
/// Node `k` sits at `t_k = k * dt`; interval `k` is `[t_k, t_{k+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
    index_t: usize,
}

impl TimeGrid {
    /// Builds the grid, rejecting any `T` or `T_hat` that does not fall on a node.
    pub fn new(t_measure: f64, t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(QoctError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if !(t_measure.is_finite() && t_measure > 0.0) {
            return Err(QoctError::InvalidGrid(format!("T must be positive, got {t_measure}")));
        }
        if !(t_final.is_finite() && t_final > t_measure) {
            return Err(QoctError::InvalidGrid(format!(
                "T_hat ({t_final}) must exceed T ({t_measure})"
            )));
        }
        let index_t = commensurate_steps(t_measure, dt, "T")?;
        let n_steps = commensurate_steps(t_final, dt, "T_hat")?;
        if index_t == 0 || index_t >= n_steps {
            return Err(QoctError::InvalidGrid(format!(
                "measurement node {index_t} must lie strictly inside 0..{n_steps}"
            )));
        }
        Ok(Self { dt, n_steps, index_t })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Node index of the measurement time `T`.
    pub fn index_t(&self) -> usize {
        self.index_t
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn measurement_time(&self) -> f64 {
        self.time(self.index_t)
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.n_steps)
    }
}

fn commensurate_steps(t: f64, dt: f64, name: &str) -> Result<usize> {
    let ratio = t / dt;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > GRID_COMMENSURABILITY_TOL * ratio {
        return Err(QoctError::InvalidGrid(format!(
            "{name} = {t} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(rounded as usize)
}

/// Piecewise-constant real field; sample `k` acts on interval `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField(Vec<f64>);

impl ControlField {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(QoctError::NonFinite("control field"));
        }
        Ok(Self(samples))
    }

    /// Field with one sample per grid interval.
    pub fn on_grid(samples: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        let field = Self::new(samples)?;
        field.check_grid(grid)?;
        Ok(field)
    }

    pub fn constant(value: f64, grid: &TimeGrid) -> Self {
        Self(vec![value; grid.n_steps()])
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        Self::constant(0.0, grid)
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..grid.n_steps()).map(|k| f(grid.time(k))).collect())
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.0.len() != grid.n_steps() {
            return Err(QoctError::LengthMismatch {
                what: "control field",
                expected: grid.n_steps(),
                found: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    /// Copy with sample `k` shifted by `delta`.
    pub fn perturbed(&self, k: usize, delta: f64) -> Self {
        let mut samples = self.0.clone();
        samples[k] += delta;
        Self(samples)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.0
    }
}

/// Wavefunction at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    states: Vec<StateVector>,
}

impl StateTrajectory {
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        if let Some(first) = states.first() {
            let dim = first.dim();
            if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
                return Err(QoctError::DimensionMismatch {
                    expected: dim,
                    found: bad.dim(),
                });
            }
        }
        Ok(Self { states })
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.states.len() != grid.n_nodes() {
            return Err(QoctError::LengthMismatch {
                what: "state trajectory",
                expected: grid.n_nodes(),
                found: self.states.len(),
            });
        }
        Ok(())
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &StateVector {
        &self.states[k]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, StateVector::dim)
    }

    /// Largest `| ||psi_k|| - ||psi_0|| |` along the trajectory.
    pub fn norm_drift(&self) -> f64 {
        let Some(first) = self.states.first() else {
            return 0.0;
        };
        let n0 = first.norm();
        self.states.iter().map(|s| (s.norm() - n0).abs()).fold(0.0, f64::max)
    }

    /// Copy with node `k` replaced.
    pub fn with_state(&self, k: usize, state: StateVector) -> Result<Self> {
        let mut states = self.states.clone();
        states[k] = state;
        Self::new(states)
    }
}
