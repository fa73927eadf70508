//! Full-order models.
//!
//! A [`FullOrderProblem`] is a parametric, time-dependent discretization on a
//! fixed grid. Besides marching its own trajectories it exposes its discrete
//! residual both as a full vector and row by row through local stencils, so
//! the reduced solver can evaluate it only where collocation points sit.
//!
//! Two models are provided: [`BurgersProblem`] (forward Euler, explicit
//! residual convention) and [`CavityProblem`] (backward Euler with Picard
//! iteration on a staggered grid).

mod burgers;
mod cavity;
mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{DenseMatrix, NumericsError};

pub use burgers::{viscosity, BurgersProblem};
pub use cavity::{CavityDof, CavityLayout, CavityProblem, PicardStats};
pub use snapshot::{read_snapshot, read_snapshot_file, write_snapshot, write_snapshot_file, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// Stopping tolerance on the max-abs Picard update.
pub const PICARD_TOLERANCE: f64 = 1e-8;
/// Iteration cap for every Picard loop, full-order or reduced.
pub const PICARD_MAX_ITERATIONS: usize = 50;
/// Any explicit update larger than this in magnitude is treated as blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Error)]
pub enum FomError {
    #[error("state has length {got}, grid expects {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("row {index} out of range for {len} degrees of freedom")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("solution diverged at step {step}: |u| reached {value:e}")]
    Diverged { step: usize, value: f64 },
    #[error("Picard iteration did not converge at step {step} after {iterations} iterations (last update {update:e})")]
    PicardNotConverged {
        step: usize,
        iterations: usize,
        update: f64,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("{0} is not supported by this problem")]
    Unsupported(&'static str),
    #[error("malformed snapshot data: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter {
    values: Vec<f64>,
}

impl Parameter {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn scalar(value: f64) -> Self {
        Self { values: vec![value] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// First component; both shipped models are one-parameter families.
    pub fn first(&self) -> f64 {
        self.values[0]
    }

    /// Bit-exact key for caches.
    pub fn key(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }
}

impl std::fmt::Display for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|v| format!("{v}")).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// Axis-aligned box of admissible parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn contains(&self, mu: &Parameter) -> bool {
        mu.values().len() == self.lower.len()
            && mu
                .values()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Uniform time nodes `t_i = i dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub t_final: f64,
}

impl TimeGrid {
    /// Derives the step count from `t_final / dt`, which must be an integer
    /// to 1e-12 relative.
    pub fn new(dt: f64, t_final: f64) -> Result<Self, FomError> {
        if !(dt > 0.0) || !(t_final >= 0.0) || !dt.is_finite() || !t_final.is_finite() {
            return Err(FomError::InvalidTimeGrid(format!(
                "dt = {dt}, t_final = {t_final}"
            )));
        }
        let n = (t_final / dt).round();
        if (n * dt - t_final).abs() > 1e-12 * t_final.max(dt) {
            return Err(FomError::InvalidTimeGrid(format!(
                "t_final = {t_final} is not a whole number of steps of {dt}"
            )));
        }
        Ok(Self {
            dt,
            n_steps: n as usize,
            t_final,
        })
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialGrid {
    Interval1d { x_min: f64, x_max: f64, n_cells: usize },
    Mac2d { n_x: usize, n_y: usize },
}

impl SpatialGrid {
    /// Field name and physical `(x, y)` of a degree of freedom; `y` is 0 in
    /// one dimension.
    pub fn position(&self, dof: usize) -> (&'static str, f64, f64) {
        match *self {
            SpatialGrid::Interval1d { x_min, x_max, n_cells } => {
                ("u", x_min + (x_max - x_min) * dof as f64 / n_cells as f64, 0.0)
            }
            SpatialGrid::Mac2d { n_x, n_y } => CavityLayout::new(n_x, n_y).position(dof),
        }
    }
}

/// Whether the residual evaluates the operator at the previous state
/// (forward Euler) or at the new one (backward Euler).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScheme {
    Explicit,
    Implicit,
}

/// One row of the Picard-linearized residual: `sum(coeff * w[col]) - rhs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearizedRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearizedRow {
    #[inline]
    pub(crate) fn add(&mut self, col: usize, coeff: f64) {
        self.entries.push((col, coeff));
    }

    pub fn apply(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(c, a)| a * w[c]).sum::<f64>() - self.rhs
    }
}

/// Full-order trajectory: one column per time node, column 0 the initial
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix(DenseMatrix);

impl SnapshotMatrix {
    pub fn new(matrix: DenseMatrix) -> Self {
        Self(matrix)
    }

    pub fn n_dof(&self) -> usize {
        self.0.rows()
    }

    pub fn n_times(&self) -> usize {
        self.0.cols()
    }

    pub fn state(&self, time_index: usize) -> &[f64] {
        self.0.column(time_index)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }
}

/// Serializable description of a shipped model, enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    Burgers {
        #[serde(default = "default_burgers_cells")]
        n_cells: usize,
        dt: f64,
        #[serde(default = "default_burgers_t_final")]
        t_final: f64,
    },
    Cavity {
        n_x: usize,
        n_y: usize,
        dt: f64,
        t_final: f64,
    },
}

fn default_burgers_cells() -> usize {
    600
}

fn default_burgers_t_final() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn FullOrderProblem>, FomError> {
        Ok(match *self {
            ProblemSpec::Burgers { n_cells, dt, t_final } => {
                Box::new(BurgersProblem::new(n_cells, TimeGrid::new(dt, t_final)?)?)
            }
            ProblemSpec::Cavity { n_x, n_y, dt, t_final } => {
                Box::new(CavityProblem::new(n_x, n_y, TimeGrid::new(dt, t_final)?)?)
            }
        })
    }

    pub fn default_box(&self) -> ParameterBox {
        match self {
            ProblemSpec::Burgers { .. } => ParameterBox::interval(0.005, 0.1),
            ProblemSpec::Cavity { .. } => ParameterBox::interval(10.0, 500.0),
        }
    }
}

/// A parametric full-order discretization.
///
/// Row methods take full-length state slices but only read the entries
/// listed by [`stencil_support`](Self::stencil_support), so callers may pass
/// scratch vectors that are valid only there.
pub trait FullOrderProblem: Send + Sync {
    fn n_dof(&self) -> usize;

    fn time_grid(&self) -> &TimeGrid;

    fn spatial_grid(&self) -> SpatialGrid;

    fn scheme(&self) -> TimeScheme;

    fn spec(&self) -> ProblemSpec;

    fn initial_condition(&self, mu: &Parameter) -> Vec<f64>;

    /// Discrete residual at every row.
    fn residual(&self, u_i: &[f64], u_prev: &[f64], t_i: f64, mu: &Parameter) -> Result<Vec<f64>, FomError>;

    /// Residual at the listed rows only, through local stencils.
    fn residual_rows(
        &self,
        u_i: &[f64],
        u_prev: &[f64],
        t_i: f64,
        mu: &Parameter,
        rows: &[usize],
    ) -> Result<Vec<f64>, FomError>;

    /// Point evaluations of `v / dt - P(v, t; mu)` (mass-weighted time term).
    fn functional_rows(&self, v: &[f64], t: f64, mu: &Parameter, rows: &[usize]) -> Result<Vec<f64>, FomError>;

    /// Sorted, deduplicated degrees of freedom read by the row methods for
    /// the listed rows, including the rows themselves.
    fn stencil_support(&self, rows: &[usize]) -> Vec<usize>;

    /// Explicit problems: the forward-Euler update from `u_prev` at the
    /// listed rows. The residual is then `(u_i - update) / dt`.
    fn explicit_update_rows(
        &self,
        _u_prev: &[f64],
        _t_prev: f64,
        _mu: &Parameter,
        _rows: &[usize],
    ) -> Result<Vec<f64>, FomError> {
        Err(FomError::Unsupported("explicit update"))
    }

    /// Implicit problems: residual rows linearized at `u_bar` by freezing
    /// the convecting factor. At `w = u_bar` they reproduce the nonlinear
    /// residual exactly.
    fn linearized_rows(
        &self,
        _u_bar: &[f64],
        _u_prev: &[f64],
        _t_i: f64,
        _mu: &Parameter,
        _rows: &[usize],
    ) -> Result<Vec<LinearizedRow>, FomError> {
        Err(FomError::Unsupported("Picard linearization"))
    }

    fn solve_trajectory(&self, mu: &Parameter) -> Result<SnapshotMatrix, FomError>;

    fn check_state(&self, state: &[f64]) -> Result<(), FomError> {
        if state.len() != self.n_dof() {
            return Err(FomError::GridMismatch {
                expected: self.n_dof(),
                got: state.len(),
            });
        }
        Ok(())
    }

    fn check_rows(&self, rows: &[usize]) -> Result<(), FomError> {
        let len = self.n_dof();
        match rows.iter().find(|&&r| r >= len) {
            Some(&index) => Err(FomError::IndexOutOfRange { index, len }),
            None => Ok(()),
        }
    }
}

/// Full residual of the discrete model (see [`FullOrderProblem::residual`]).
pub fn fom_residual(
    problem: &dyn FullOrderProblem,
    u_i: &[f64],
    u_prev: &[f64],
    t_i: f64,
    mu: &Parameter,
) -> Result<Vec<f64>, FomError> {
    problem.residual(u_i, u_prev, t_i, mu)
}

/// Residual rows via local stencils; equals `gather(fom_residual(..), rows)`.
pub fn fom_residual_rows(
    problem: &dyn FullOrderProblem,
    u_i: &[f64],
    u_prev: &[f64],
    t_i: f64,
    mu: &Parameter,
    rows: &[usize],
) -> Result<Vec<f64>, FomError> {
    problem.residual_rows(u_i, u_prev, t_i, mu, rows)
}

pub fn fom_solve_trajectory(problem: &dyn FullOrderProblem, mu: &Parameter) -> Result<SnapshotMatrix, FomError> {
    problem.solve_trajectory(mu)
}
