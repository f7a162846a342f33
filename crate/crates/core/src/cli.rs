//! Command-line front end: `qoct optimize|verify|gradcheck|propagate`.
//!
//! Exit codes: 0 on success, 1 on unusable input (config, field file, output
//! directory), 2 when the optimizer does not converge or a check fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    check_canonical_jump, check_conjugate_independence, check_conjugate_independence_scaled, check_continuous_family,
    check_field_continuity, ContinuityReport, Solution,
};
use crate::error::QoctError;
use crate::functional::{eval_j_cost, eval_j_opt, FunctionalBreakdown};
use crate::gradient::{gradient_report, GradientReport, DEFAULT_PROBE_STEP, GRADIENT_REL_TOL};
use crate::instances::noisy_field;
use crate::model::{ControlField, ControlHamiltonian, HermitianOperator, StateTrajectory, StateVector, TimeGrid};
use crate::optimizer::{optimize, OptimizationConfig, OptimizationResult};
use crate::problem::ControlProblem;
use crate::propagator::{CostateBoundary, FieldPropagator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Continuous-family indices always exercised by `verify`.
pub const VERIFY_FAMILY: [i32; 3] = [1, 2, -1];

#[derive(Debug, Parser)]
#[command(
    name = "qoct",
    version,
    about = "Quantum optimal control with an intermediate-time objective"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the field and write field.csv, populations.csv, history.csv, summary.json.
    Optimize {
        #[command(flatten)]
        io: IoArgs,
        /// Overrides `scheme.seed` for the initial-guess noise.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the boundary, continuity, conjugation and gradient checks; writes verify.json.
    Verify {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Field to verify at (defaults to the seeded initial guess).
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PROBE_STEP)]
        h: f64,
    },
    /// Compare the analytic gradient with central differences; writes grad.json.
    Gradcheck {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = DEFAULT_PROBE_STEP)]
        h: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Propagate a given field; writes populations.csv and summary.json.
    Propagate {
        #[command(flatten)]
        io: IoArgs,
        /// CSV with header `t,eps` and one row per field sample.
        #[arg(long)]
        field: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] QoctError),
}

impl CliError {
    fn config(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    fn io(path: &Path, err: impl ToString) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Complex number as `[re, im]`.
pub type RawComplex = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum EpsRefConfig {
    Constant(f64),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub max_iters: usize,
    pub j_tol: f64,
    pub stationarity_tol: f64,
    pub seed: u64,
    /// Amplitude of the uniform noise added to `eps_ref` for the initial guess.
    pub noise_amplitude: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            j_tol: 1e-12,
            stationarity_tol: 1e-6,
            seed: 0,
            noise_amplitude: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub h0: Vec<Vec<RawComplex>>,
    pub mu: Vec<Vec<RawComplex>>,
    pub observable: Vec<Vec<RawComplex>>,
    pub psi0: Vec<RawComplex>,
    #[serde(rename = "T")]
    pub t_measure: f64,
    #[serde(rename = "T_hat")]
    pub t_final: f64,
    pub dt: f64,
    pub alpha: f64,
    pub eps_ref: EpsRefConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default = "canonical")]
    pub boundary: CostateBoundary,
}

fn canonical() -> CostateBoundary {
    CostateBoundary::Canonical
}

/// Validated contents of a [`ProblemConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: ControlProblem,
    pub scheme: SchemeConfig,
    pub boundary: CostateBoundary,
}

impl Setup {
    pub fn initial_field(&self, seed: Option<u64>) -> ControlField {
        noisy_field(
            self.problem.eps_ref(),
            self.scheme.noise_amplitude,
            seed.unwrap_or(self.scheme.seed),
        )
    }
}

fn complex(z: RawComplex) -> Complex64 {
    Complex64::new(z[0], z[1])
}

fn operator(rows: &[Vec<RawComplex>], dim: usize, field: &'static str) -> CliResult<HermitianOperator> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::config(field, format!("expected a {dim}x{dim} matrix")));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| complex(rows[i][j]));
    HermitianOperator::named(m, field).map_err(|e| CliError::config(field, e))
}

impl ProblemConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            // a missing key is reported against its parent; name the key itself
            let field = match inner.split('`').nth(1) {
                Some(key) if inner.starts_with("missing field") => match path.as_str() {
                    "." => key.to_string(),
                    parent => format!("{parent}.{key}"),
                },
                _ if path == "." => "<document>".to_string(),
                _ => path,
            };
            CliError::Config { field, message: inner }
        })
    }

    pub fn build(&self) -> CliResult<Setup> {
        let dim = self.dimension;
        if dim < 2 {
            return Err(CliError::config("dimension", format!("must be at least 2, got {dim}")));
        }
        let h0 = operator(&self.h0, dim, "h0")?;
        let mu = operator(&self.mu, dim, "mu")?;
        let observable = operator(&self.observable, dim, "observable")?;

        if self.psi0.len() != dim {
            return Err(CliError::config(
                "psi0",
                format!("expected {dim} amplitudes, got {}", self.psi0.len()),
            ));
        }
        let psi0 = StateVector::normalized(DVector::from_iterator(dim, self.psi0.iter().copied().map(complex)))
            .map_err(|e| CliError::config("psi0", e))?;

        for (name, value) in [("T", self.t_measure), ("T_hat", self.t_final), ("dt", self.dt)] {
            if !value.is_finite() {
                return Err(CliError::config(name, "must be finite"));
            }
        }
        let grid_field = if self.t_final <= self.t_measure { "T_hat" } else { "dt" };
        let grid = TimeGrid::new(self.t_measure, self.t_final, self.dt).map_err(|e| CliError::config(grid_field, e))?;

        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(CliError::config(
                "alpha",
                format!("must be positive, got {}", self.alpha),
            ));
        }
        let eps_ref = match &self.eps_ref {
            EpsRefConfig::Constant(v) if v.is_finite() => ControlField::constant(*v, &grid),
            EpsRefConfig::Constant(_) => return Err(CliError::config("eps_ref", "must be finite")),
            EpsRefConfig::Samples(s) => {
                ControlField::on_grid(s.clone(), &grid).map_err(|e| CliError::config("eps_ref", e))?
            }
        };

        let s = &self.scheme;
        if s.max_iters == 0 {
            return Err(CliError::config("scheme.max_iters", "must be at least 1"));
        }
        for (name, value) in [
            ("scheme.j_tol", s.j_tol),
            ("scheme.stationarity_tol", s.stationarity_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(CliError::config(name, format!("must be positive, got {value}")));
            }
        }
        if !(s.noise_amplitude.is_finite() && s.noise_amplitude >= 0.0) {
            return Err(CliError::config("scheme.noise_amplitude", "must be non-negative"));
        }
        self.boundary.validate().map_err(|e| CliError::config("boundary", e))?;

        let hamiltonian = ControlHamiltonian::new(h0, mu).map_err(|e| CliError::config("mu", e))?;
        let problem = ControlProblem::new(hamiltonian, observable, psi0, grid, self.alpha, eps_ref)?;
        Ok(Setup {
            problem,
            scheme: self.scheme.clone(),
            boundary: self.boundary,
        })
    }
}

fn real_matrix(rows: &[&[f64]]) -> Vec<Vec<RawComplex>> {
    rows.iter().map(|r| r.iter().map(|&x| [x, 0.0]).collect()).collect()
}

/// Config for the two-level transfer benchmark.
pub fn benchmark_config() -> ProblemConfig {
    ProblemConfig {
        dimension: 2,
        h0: real_matrix(&[&[0.0, 0.0], &[0.0, 1.0]]),
        mu: real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]]),
        observable: real_matrix(&[&[0.0, 0.0], &[0.0, 1.0]]),
        psi0: vec![[1.0, 0.0], [0.0, 0.0]],
        t_measure: 10.0,
        t_final: 10.5,
        dt: 0.025,
        alpha: 1.0,
        eps_ref: EpsRefConfig::Constant(0.0),
        scheme: SchemeConfig::default(),
        boundary: CostateBoundary::Canonical,
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(&path, e))?;
    tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Input(e.to_string());
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer
            .write_record(row.iter().map(|x| format!("{x:.16e}")))
            .map_err(fail)?;
    }
    writer.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

fn field_csv(grid: &TimeGrid, samples: &[f64]) -> CliResult<Vec<u8>> {
    let header = ["t".to_string(), "eps".to_string()];
    csv_bytes(&header, samples.iter().enumerate().map(|(k, &e)| vec![grid.time(k), e]))
}

fn populations_csv(grid: &TimeGrid, psi: &StateTrajectory) -> CliResult<Vec<u8>> {
    let mut header = vec!["t".to_string()];
    header.extend((0..psi.dim()).map(|i| format!("p{i}")));
    csv_bytes(
        &header,
        psi.states().iter().enumerate().map(|(k, s)| {
            let mut row = vec![grid.time(k)];
            row.extend(s.populations());
            row
        }),
    )
}

fn history_csv(history: &[FunctionalBreakdown]) -> CliResult<Vec<u8>> {
    let header = ["iteration", "j_opt", "j_cost", "j_tdse", "j_total"].map(String::from);
    csv_bytes(
        &header,
        history
            .iter()
            .enumerate()
            .map(|(n, b)| vec![n as f64, b.j_opt, b.j_cost, b.j_tdse, b.j_total]),
    )
}

/// Reads a `t,eps` CSV and checks it against the grid.
pub fn read_field_csv(path: &Path, grid: &TimeGrid) -> CliResult<ControlField> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let eps_col = headers
        .iter()
        .position(|h| h.trim() == "eps")
        .ok_or_else(|| CliError::Input(format!("{}: missing `eps` column", path.display())))?;
    let t_col = headers.iter().position(|h| h.trim() == "t");
    let mut samples = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let parse = |col: usize| -> CliResult<f64> {
            record
                .get(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Input(format!("{}: row {}: unreadable number", path.display(), k + 1)))
        };
        if let Some(col) = t_col {
            let t = parse(col)?;
            if (t - grid.time(k)).abs() > 1e-9 * grid.final_time().max(1.0) {
                return Err(CliError::Input(format!(
                    "{}: row {}: t = {t} does not match grid time {}",
                    path.display(),
                    k + 1,
                    grid.time(k)
                )));
            }
        }
        samples.push(parse(eps_col)?);
    }
    ControlField::on_grid(samples, grid).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct OptimizeSummary<'a> {
    pub converged: bool,
    pub iterations_run: usize,
    pub final_fidelity: f64,
    pub final_stationarity_residual: f64,
    pub monotonic: bool,
    pub max_j_decrease: f64,
    pub max_tdse_residual: f64,
    pub seed: u64,
    #[serde(rename = "final")]
    pub final_breakdown: &'a FunctionalBreakdown,
    pub j_history: &'a [FunctionalBreakdown],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PropagateSummary {
    pub j_opt: f64,
    pub j_cost: f64,
    pub tdse_residual: f64,
    pub norm_drift: f64,
    pub final_populations: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct FamilyEntry {
    pub n: i32,
    pub report: ContinuityReport,
}

#[derive(Debug, Serialize)]
pub struct ConjugateEntry {
    pub deviation: f64,
    pub beta: RawComplex,
    pub scaled_deviation: f64,
}

#[derive(Debug, Serialize)]
pub struct GradcheckOutput<'a> {
    pub tolerance: f64,
    pub passed: bool,
    #[serde(flatten)]
    pub report: &'a GradientReport,
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput {
    pub canonical_jump: ContinuityReport,
    pub field_continuity: ContinuityReport,
    pub continuous_family: Vec<FamilyEntry>,
    pub conjugate_independence: ConjugateEntry,
    pub gradient: GradientReport,
    pub checks: Vec<(String, bool)>,
    pub all_passed: bool,
}

/// Exact-zero and tolerance checks reported by `verify`.
pub const CANONICAL_TOL: f64 = 1e-12;
pub const FIELD_GAP_TOL: f64 = 1e-10;
pub const HOMOGENEOUS_TOL: f64 = 1e-12;
pub const PHASE_DEFECT_TOL: f64 = 1e-14;
pub const CONJUGATE_TOL: f64 = 1e-12;

pub fn run_optimize(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<i32> {
    let setup = ProblemConfig::from_path(config)?.build()?;
    if setup.boundary != CostateBoundary::Canonical {
        return Err(CliError::config(
            "boundary",
            "the optimizer uses the canonical costate only",
        ));
    }
    let problem = &setup.problem;
    let grid = problem.grid();
    let seed = seed.unwrap_or(setup.scheme.seed);
    let mut cfg = OptimizationConfig::new(setup.initial_field(Some(seed)));
    cfg.max_iters = setup.scheme.max_iters;
    cfg.j_tol = setup.scheme.j_tol;
    cfg.stationarity_tol = setup.scheme.stationarity_tol;
    let result: OptimizationResult = optimize(problem, &cfg)?;

    let field = ControlField::on_grid(result.final_field.clone(), grid)?;
    let psi = FieldPropagator::new(problem.hamiltonian(), &field, grid)?.forward(problem.initial_state())?;

    prepare_dir(out)?;
    write_atomic(out, "field.csv", &field_csv(grid, &result.final_field)?)?;
    write_atomic(out, "populations.csv", &populations_csv(grid, &psi)?)?;
    write_atomic(out, "history.csv", &history_csv(&result.j_history)?)?;
    write_json(
        out,
        "summary.json",
        &OptimizeSummary {
            converged: result.converged,
            iterations_run: result.iterations_run,
            final_fidelity: result.final_fidelity,
            final_stationarity_residual: result.final_stationarity_residual,
            monotonic: result.monotonic,
            max_j_decrease: result.max_j_decrease,
            max_tdse_residual: result.max_tdse_residual,
            seed,
            final_breakdown: result.final_breakdown(),
            j_history: &result.j_history,
        },
    )?;
    eprintln!(
        "optimize: {} after {} iterations, j_opt = {:.12}, stationarity residual = {:.3e}",
        if result.converged { "converged" } else { "not converged" },
        result.iterations_run,
        result.final_fidelity,
        result.final_stationarity_residual
    );
    Ok(if result.converged { EXIT_OK } else { EXIT_FAILED })
}

pub fn run_verify(config: &Path, out: &Path, seed: Option<u64>, field_path: Option<&Path>, h: f64) -> CliResult<i32> {
    let setup = ProblemConfig::from_path(config)?.build()?;
    check_probe(h)?;
    let problem = &setup.problem;
    let grid = problem.grid();
    let field = match field_path {
        Some(path) => read_field_csv(path, grid)?,
        None => setup.initial_field(seed),
    };

    let solution = Solution::canonical(problem, &field)?;
    let canonical_jump = check_canonical_jump(&solution)?;
    let field_continuity = check_field_continuity(&solution)?;

    let mut family: Vec<i32> = VERIFY_FAMILY.to_vec();
    if let CostateBoundary::Continuous(n) = setup.boundary {
        if !family.contains(&n) {
            family.push(n);
        }
    }
    let continuous_family = family
        .iter()
        .map(|&n| {
            check_continuous_family(
                solution.psi(),
                problem.observable(),
                &field,
                problem.hamiltonian(),
                grid,
                problem.alpha(),
                problem.eps_ref(),
                n,
            )
            .map(|report| FamilyEntry { n, report })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let beta = Complex64::new(0.0, 2.0);
    let conjugate_independence = ConjugateEntry {
        deviation: check_conjugate_independence(problem.initial_state(), &field, problem.hamiltonian(), grid)?,
        beta: [beta.re, beta.im],
        scaled_deviation: check_conjugate_independence_scaled(
            problem.initial_state(),
            &field,
            problem.hamiltonian(),
            grid,
            beta,
        )?,
    };
    let gradient = gradient_report(problem, &field, h)?;

    let mut checks = vec![
        (
            "canonical_costate_matches_O_psi".to_string(),
            canonical_jump.costate_matches_o_psi < CANONICAL_TOL,
        ),
        (
            "canonical_jump_equals_O_psi_norm".to_string(),
            (canonical_jump.jump_norm_at_t - canonical_jump.o_psi_norm).abs() < CANONICAL_TOL,
        ),
        (
            "canonical_field_after_T_is_reference".to_string(),
            canonical_jump.post_measurement_field_gap == 0.0,
        ),
        (
            "field_continuous_when_commuting".to_string(),
            !field_continuity.commutator_condition_holds || field_continuity.field_left_limit_gap < FIELD_GAP_TOL,
        ),
    ];
    for entry in &continuous_family {
        let r = &entry.report;
        let defect_ok = r
            .phase_defect
            .is_some_and(|d| (d.relative_jump - 2.0).abs() < PHASE_DEFECT_TOL);
        checks.push((
            format!("continuous_n{}", entry.n),
            r.jump_norm_at_t == 0.0 && r.homogeneous_residual < HOMOGENEOUS_TOL && defect_ok,
        ));
    }
    checks.push((
        "conjugate_independence".to_string(),
        conjugate_independence.deviation < CONJUGATE_TOL && conjugate_independence.scaled_deviation < CONJUGATE_TOL,
    ));
    checks.push(("gradient".to_string(), gradient.passes()));
    let all_passed = checks.iter().all(|(_, ok)| *ok);
    for (name, ok) in &checks {
        eprintln!("verify: {} {name}", if *ok { "ok  " } else { "FAIL" });
    }

    prepare_dir(out)?;
    write_json(
        out,
        "verify.json",
        &VerifyOutput {
            canonical_jump,
            field_continuity,
            continuous_family,
            conjugate_independence,
            gradient,
            checks,
            all_passed,
        },
    )?;
    Ok(if all_passed { EXIT_OK } else { EXIT_FAILED })
}

pub fn run_gradcheck(config: &Path, out: &Path, h: f64, seed: Option<u64>) -> CliResult<i32> {
    let setup = ProblemConfig::from_path(config)?.build()?;
    check_probe(h)?;
    let field = setup.initial_field(seed);
    let report = gradient_report(&setup.problem, &field, h)?;
    let passed = report.passes();
    prepare_dir(out)?;
    write_json(
        out,
        "grad.json",
        &GradcheckOutput {
            tolerance: GRADIENT_REL_TOL,
            passed,
            report: &report,
        },
    )?;
    eprintln!(
        "gradcheck: max relative error {:.3e} at h = {h:e} ({})",
        report.max_rel_error,
        if passed {
            "ok"
        } else {
            "exceeds tolerance; central differences are truncation-dominated at this step"
        }
    );
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

pub fn run_propagate(config: &Path, field_path: &Path, out: &Path) -> CliResult<i32> {
    let setup = ProblemConfig::from_path(config)?.build()?;
    let problem = &setup.problem;
    let grid = problem.grid();
    let field = read_field_csv(field_path, grid)?;
    let propagator = FieldPropagator::new(problem.hamiltonian(), &field, grid)?;
    let psi = propagator.forward(problem.initial_state())?;
    let summary = PropagateSummary {
        j_opt: eval_j_opt(&psi, problem.observable(), grid)?,
        j_cost: eval_j_cost(&field, problem.eps_ref(), problem.alpha(), grid)?,
        tdse_residual: propagator.tdse_residual(&psi)?,
        norm_drift: psi.norm_drift(),
        final_populations: psi.state(grid.n_steps()).populations(),
    };
    prepare_dir(out)?;
    write_atomic(out, "populations.csv", &populations_csv(grid, &psi)?)?;
    write_json(out, "summary.json", &summary)?;
    Ok(EXIT_OK)
}

fn check_probe(h: f64) -> CliResult<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(CliError::Input(format!("--h must be positive, got {h}")));
    }
    Ok(())
}

fn prepare_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("QOCT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("QOCT_THREADS must be a positive integer, got `{value}`")))?;
    // A pool may already exist when called repeatedly in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn dispatch(cli: Cli) -> CliResult<i32> {
    configure_threads()?;
    match cli.command {
        Command::Optimize { io, seed } => run_optimize(&io.config, &io.out, seed),
        Command::Verify { io, seed, field, h } => run_verify(&io.config, &io.out, seed, field.as_deref(), h),
        Command::Gradcheck { io, h, seed } => run_gradcheck(&io.config, &io.out, h, seed),
        Command::Propagate { io, field } => run_propagate(&io.config, &field, &io.out),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_INPUT
        }
    }
}
