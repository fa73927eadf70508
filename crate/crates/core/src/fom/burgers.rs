//! Viscous Burgers' equation on `[-1, 1]` with a time-dependent parametric
//! viscosity, inflow `u(-1, t) = 2` and a zero-gradient outflow.
//!
//! Convection is discretized in conservative form with a first-order upwind
//! flux for `f(u) = u^2 / 2`; diffusion uses the central second difference.
//! Time stepping is forward Euler, stable for
//! `dt <= 0.9 * min(h / max|u|, h^2 / (2 nu_max))`.

use std::f64::consts::PI;

use log::warn;

use super::{
    FomError, FullOrderProblem, Parameter, ProblemSpec, SnapshotMatrix, SpatialGrid, TimeGrid, TimeScheme,
    DIVERGENCE_THRESHOLD,
};
use crate::numerics::DenseMatrix;

/// `nu(t) = mu (sin(0.01 pi t) + 2)`.
pub fn viscosity(t: f64, mu: &Parameter) -> f64 {
    mu.first() * ((0.01 * PI * t).sin() + 2.0)
}

/// Upwind numerical flux at the interface between `a` (left) and `b` (right).
#[inline]
fn upwind_flux(a: f64, b: f64) -> f64 {
    if a + b >= 0.0 {
        0.5 * a * a
    } else {
        0.5 * b * b
    }
}

#[derive(Debug, Clone)]
pub struct BurgersProblem {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    h: f64,
    time: TimeGrid,
    inflow: f64,
    convection: bool,
}

impl BurgersProblem {
    pub fn new(n_cells: usize, time: TimeGrid) -> Result<Self, FomError> {
        if n_cells < 2 {
            return Err(FomError::InvalidGrid(format!("need at least 2 cells, got {n_cells}")));
        }
        let (x_min, x_max) = (-1.0, 1.0);
        Ok(Self {
            x_min,
            x_max,
            n_cells,
            h: (x_max - x_min) / n_cells as f64,
            time,
            inflow: 2.0,
            convection: true,
        })
    }

    /// Test hook: replaces the inflow value (and the matching initial node).
    pub fn with_inflow(mut self, value: f64) -> Self {
        self.inflow = value;
        self
    }

    /// Test hook: drops the convective flux, leaving pure diffusion.
    pub fn without_convection(mut self) -> Self {
        self.convection = false;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    /// Largest stable forward-Euler step for viscosity scale `mu`.
    pub fn cfl_limit(&self, mu: &Parameter) -> f64 {
        let u_max = self.inflow.abs().max(1.0);
        let nu_max = 3.0 * mu.first().abs();
        let conv = self.h / u_max;
        let diff = if nu_max > 0.0 { self.h * self.h / (2.0 * nu_max) } else { f64::INFINITY };
        0.9 * conv.min(diff)
    }

    /// Spatial operator `-(u^2/2)_x + nu(t) u_xx` at every node; boundary
    /// rows are zero.
    pub fn burgers_rhs(&self, u: &[f64], t: f64, mu: &Parameter) -> Vec<f64> {
        let n = self.n_cells;
        let nu = viscosity(t, mu);
        let inv_h = 1.0 / self.h;
        let inv_h2 = inv_h * inv_h;
        let fluxes: Vec<f64> = if self.convection {
            u.windows(2).map(|w| upwind_flux(w[0], w[1])).collect()
        } else {
            vec![0.0; n]
        };
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            out[i] = -(fluxes[i] - fluxes[i - 1]) * inv_h + nu * (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2;
        }
        out
    }

    #[inline]
    fn rhs_at(&self, u: &[f64], i: usize, nu: f64) -> f64 {
        if i == 0 || i == self.n_cells {
            return 0.0;
        }
        let (l, c, r) = (u[i - 1], u[i], u[i + 1]);
        let conv = if self.convection {
            -(upwind_flux(c, r) - upwind_flux(l, c)) / self.h
        } else {
            0.0
        };
        conv + nu * (r - 2.0 * c + l) / (self.h * self.h)
    }

    #[inline]
    fn update_at(&self, u_prev: &[f64], i: usize, nu: f64, dt: f64) -> f64 {
        let n = self.n_cells;
        if i == 0 {
            self.inflow
        } else if i == n {
            u_prev[n - 1] + dt * self.rhs_at(u_prev, n - 1, nu)
        } else {
            u_prev[i] + dt * self.rhs_at(u_prev, i, nu)
        }
    }

    // Row by row, so full and sampled evaluations agree to the last bit.
    fn update_full(&self, u: &[f64], t: f64, mu: &Parameter, dt: f64) -> Vec<f64> {
        let nu = viscosity(t, mu);
        (0..=self.n_cells).map(|i| self.update_at(u, i, nu, dt)).collect()
    }

    /// One forward-Euler step of size `dt` from time `t`.
    pub fn step_explicit(&self, state: &[f64], t: f64, mu: &Parameter, dt: f64) -> Result<Vec<f64>, FomError> {
        self.check_state(state)?;
        let next = self.update_full(state, t, mu, dt);
        if let Some(v) = next.iter().find(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            return Err(FomError::Diverged { step: 0, value: v.abs() });
        }
        Ok(next)
    }
}

impl FullOrderProblem for BurgersProblem {
    fn n_dof(&self) -> usize {
        self.n_cells + 1
    }

    fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    fn spatial_grid(&self) -> SpatialGrid {
        SpatialGrid::Interval1d {
            x_min: self.x_min,
            x_max: self.x_max,
            n_cells: self.n_cells,
        }
    }

    fn scheme(&self) -> TimeScheme {
        TimeScheme::Explicit
    }

    fn spec(&self) -> ProblemSpec {
        ProblemSpec::Burgers {
            n_cells: self.n_cells,
            dt: self.time.dt,
            t_final: self.time.t_final,
        }
    }

    fn initial_condition(&self, _mu: &Parameter) -> Vec<f64> {
        const EPS: f64 = 1e-12;
        (0..=self.n_cells)
            .map(|i| {
                let x = self.node(i);
                if i == 0 {
                    self.inflow
                } else if x >= -0.5 - EPS && x <= -1.0 / 3.0 + EPS {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn residual(&self, u_i: &[f64], u_prev: &[f64], t_i: f64, mu: &Parameter) -> Result<Vec<f64>, FomError> {
        self.check_state(u_i)?;
        self.check_state(u_prev)?;
        let dt = self.time.dt;
        let target = self.update_full(u_prev, t_i - dt, mu, dt);
        Ok(u_i.iter().zip(&target).map(|(a, b)| (a - b) / dt).collect())
    }

    fn residual_rows(
        &self,
        u_i: &[f64],
        u_prev: &[f64],
        t_i: f64,
        mu: &Parameter,
        rows: &[usize],
    ) -> Result<Vec<f64>, FomError> {
        self.check_state(u_i)?;
        self.check_state(u_prev)?;
        self.check_rows(rows)?;
        let dt = self.time.dt;
        let nu = viscosity(t_i - dt, mu);
        Ok(rows
            .iter()
            .map(|&r| (u_i[r] - self.update_at(u_prev, r, nu, dt)) / dt)
            .collect())
    }

    fn functional_rows(&self, v: &[f64], t: f64, mu: &Parameter, rows: &[usize]) -> Result<Vec<f64>, FomError> {
        self.check_state(v)?;
        self.check_rows(rows)?;
        let nu = viscosity(t, mu);
        let dt = self.time.dt;
        Ok(rows.iter().map(|&r| v[r] / dt - self.rhs_at(v, r, nu)).collect())
    }

    fn stencil_support(&self, rows: &[usize]) -> Vec<usize> {
        let n = self.n_cells;
        let mut out = Vec::with_capacity(rows.len() * 3);
        for &r in rows {
            if r == 0 {
                out.push(0);
            } else if r >= n {
                out.extend_from_slice(&[n - 2, n - 1, n]);
            } else {
                out.extend_from_slice(&[r - 1, r, r + 1]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn explicit_update_rows(
        &self,
        u_prev: &[f64],
        t_prev: f64,
        mu: &Parameter,
        rows: &[usize],
    ) -> Result<Vec<f64>, FomError> {
        self.check_state(u_prev)?;
        self.check_rows(rows)?;
        let nu = viscosity(t_prev, mu);
        let dt = self.time.dt;
        Ok(rows.iter().map(|&r| self.update_at(u_prev, r, nu, dt)).collect())
    }

    fn solve_trajectory(&self, mu: &Parameter) -> Result<SnapshotMatrix, FomError> {
        let dt = self.time.dt;
        if dt > self.cfl_limit(mu) {
            warn!(
                "dt = {dt:e} exceeds the documented stability bound {:e} for mu = {mu}",
                self.cfl_limit(mu)
            );
        }
        let n_dof = self.n_dof();
        let mut data = Vec::with_capacity(n_dof * (self.time.n_steps + 1));
        let mut u = self.initial_condition(mu);
        data.extend_from_slice(&u);
        for step in 1..=self.time.n_steps {
            let next = self.update_full(&u, self.time.time(step - 1), mu, dt);
            if let Some(v) = next.iter().find(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
                return Err(FomError::Diverged { step, value: v.abs() });
            }
            data.extend_from_slice(&next);
            u = next;
        }
        Ok(SnapshotMatrix::new(DenseMatrix::from_col_major(
            n_dof,
            self.time.n_steps + 1,
            data,
        )?))
    }
}
