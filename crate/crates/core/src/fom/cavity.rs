//! Lid-driven cavity on the unit square, staggered (MAC) grid.
//!
//! Unknowns are stacked as `[u; v; p]`: `u` on vertical cell edges
//! (`(n_x + 1) * n_y`), `v` on horizontal cell edges (`n_x * (n_y + 1)`),
//! `p` at cell centers (`n_x * n_y`), each block row-major in `(i, j)` with
//! `i` along `x`. Residual rows follow the same order: `u`-momentum,
//! `v`-momentum, continuity.
//!
//! Convective terms are in conservative form, `(u^2)_x + (uv)_y` and
//! `(uv)_x + (v^2)_y`, with face and corner averages. Tangential wall values
//! enter through ghost nodes; the lid drives `u = 1` along `y = 1`. Normal
//! velocities on the walls are kept as unknowns pinned to zero.
//!
//! Time stepping is backward Euler. Each step is solved by Picard iteration:
//! the convecting factor of every quadratic term is frozen at the previous
//! iterate, and the coupled velocity-pressure system is solved with a banded
//! LU after interleaving unknowns cell by cell.

use log::debug;

use super::{
    FomError, FullOrderProblem, LinearizedRow, Parameter, ProblemSpec, SnapshotMatrix, SpatialGrid, TimeGrid,
    TimeScheme, DIVERGENCE_THRESHOLD, PICARD_MAX_ITERATIONS, PICARD_TOLERANCE,
};
use crate::numerics::{max_abs, BandedMatrix, DenseMatrix};

/// Which field a degree of freedom belongs to, with its staggered indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavityDof {
    U { i: usize, j: usize },
    V { i: usize, j: usize },
    P { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityLayout {
    pub n_x: usize,
    pub n_y: usize,
    pub hx: f64,
    pub hy: f64,
}

impl CavityLayout {
    pub fn new(n_x: usize, n_y: usize) -> Self {
        Self {
            n_x,
            n_y,
            hx: 1.0 / n_x as f64,
            hy: 1.0 / n_y as f64,
        }
    }

    pub fn n_u(&self) -> usize {
        (self.n_x + 1) * self.n_y
    }

    pub fn n_v(&self) -> usize {
        self.n_x * (self.n_y + 1)
    }

    pub fn n_p(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn n_dof(&self) -> usize {
        self.n_u() + self.n_v() + self.n_p()
    }

    #[inline]
    pub fn u(&self, i: usize, j: usize) -> usize {
        j * (self.n_x + 1) + i
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> usize {
        self.n_u() + j * self.n_x + i
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> usize {
        self.n_u() + self.n_v() + j * self.n_x + i
    }

    pub fn classify(&self, dof: usize) -> CavityDof {
        let (nu, nv) = (self.n_u(), self.n_v());
        if dof < nu {
            CavityDof::U {
                i: dof % (self.n_x + 1),
                j: dof / (self.n_x + 1),
            }
        } else if dof < nu + nv {
            let k = dof - nu;
            CavityDof::V {
                i: k % self.n_x,
                j: k / self.n_x,
            }
        } else {
            let k = dof - nu - nv;
            CavityDof::P {
                i: k % self.n_x,
                j: k / self.n_x,
            }
        }
    }

    /// Field name and physical position of a degree of freedom.
    pub fn position(&self, dof: usize) -> (&'static str, f64, f64) {
        match self.classify(dof) {
            CavityDof::U { i, j } => ("u", i as f64 * self.hx, (j as f64 + 0.5) * self.hy),
            CavityDof::V { i, j } => ("v", (i as f64 + 0.5) * self.hx, j as f64 * self.hy),
            CavityDof::P { i, j } => ("p", (i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy),
        }
    }

    /// Degrees of freedom holding a wall-normal velocity (pinned to zero).
    pub fn is_wall_dof(&self, dof: usize) -> bool {
        match self.classify(dof) {
            CavityDof::U { i, .. } => i == 0 || i == self.n_x,
            CavityDof::V { j, .. } => j == 0 || j == self.n_y,
            CavityDof::P { .. } => false,
        }
    }

    pub fn continuity_rows(&self) -> std::ops::Range<usize> {
        self.n_u() + self.n_v()..self.n_dof()
    }

    pub fn pressure_range(&self) -> std::ops::Range<usize> {
        self.continuity_rows()
    }
}

/// Per-step Picard iteration counts of a full-order solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardStats {
    pub iterations: Vec<usize>,
    pub max_continuity_residual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CavityProblem {
    layout: CavityLayout,
    time: TimeGrid,
    lid: f64,
    band_pos: Vec<usize>,
    kl: usize,
    ku: usize,
}

impl CavityProblem {
    pub fn new(n_x: usize, n_y: usize, time: TimeGrid) -> Result<Self, FomError> {
        if n_x < 2 || n_y < 2 {
            return Err(FomError::InvalidGrid(format!("need at least 2x2 cells, got {n_x}x{n_y}")));
        }
        let layout = CavityLayout::new(n_x, n_y);
        let mut band_pos = vec![0usize; layout.n_dof()];
        let mut next = 0;
        for j in 0..=n_y {
            for i in 0..=n_x {
                if j < n_y {
                    band_pos[layout.u(i, j)] = next;
                    next += 1;
                }
                if i < n_x {
                    band_pos[layout.v(i, j)] = next;
                    next += 1;
                }
                if i < n_x && j < n_y {
                    band_pos[layout.p(i, j)] = next;
                    next += 1;
                }
            }
        }
        let mut problem = Self {
            layout,
            time,
            lid: 1.0,
            band_pos,
            kl: 0,
            ku: 0,
        };
        let (mut kl, mut ku) = (0usize, 0usize);
        for row in 0..layout.n_dof() {
            let pr = problem.band_pos[row];
            for col in problem.row_support(row) {
                let pc = problem.band_pos[col];
                kl = kl.max(pr.saturating_sub(pc));
                ku = ku.max(pc.saturating_sub(pr));
            }
        }
        problem.kl = kl;
        problem.ku = ku;
        Ok(problem)
    }

    /// Test hook: sets the lid velocity (default 1).
    pub fn with_lid_velocity(mut self, lid: f64) -> Self {
        self.lid = lid;
        self
    }

    pub fn layout(&self) -> &CavityLayout {
        &self.layout
    }

    /// Lower and upper bandwidth of the interleaved system.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn row_support(&self, row: usize) -> Vec<usize> {
        let l = &self.layout;
        let (nx, ny) = (l.n_x, l.n_y);
        let mut s = vec![row];
        match l.classify(row) {
            CavityDof::U { i, j } if i > 0 && i < nx => {
                s.extend([l.u(i - 1, j), l.u(i + 1, j), l.p(i, j), l.p(i - 1, j)]);
                s.extend([l.v(i - 1, j), l.v(i, j), l.v(i - 1, j + 1), l.v(i, j + 1)]);
                if j > 0 {
                    s.push(l.u(i, j - 1));
                }
                if j + 1 < ny {
                    s.push(l.u(i, j + 1));
                }
            }
            CavityDof::V { i, j } if j > 0 && j < ny => {
                s.extend([l.v(i, j - 1), l.v(i, j + 1), l.p(i, j), l.p(i, j - 1)]);
                s.extend([l.u(i, j - 1), l.u(i, j), l.u(i + 1, j - 1), l.u(i + 1, j)]);
                if i > 0 {
                    s.push(l.v(i - 1, j));
                }
                if i + 1 < nx {
                    s.push(l.v(i + 1, j));
                }
            }
            CavityDof::P { i, j } => {
                s.extend([l.u(i, j), l.u(i + 1, j), l.v(i, j), l.v(i, j + 1)]);
            }
            _ => {}
        }
        s
    }

    /// Picard-linearized residual row. `u_bar` supplies the frozen
    /// convecting velocities; `u_prev` the backward-Euler history term.
    fn linearized_row(&self, row: usize, u_bar: &[f64], u_prev: &[f64], nu: f64, out: &mut LinearizedRow) {
        let l = &self.layout;
        let (nx, ny, hx, hy) = (l.n_x, l.n_y, l.hx, l.hy);
        let dt = self.time.dt;
        let lid = self.lid;
        out.entries.clear();
        out.rhs = 0.0;
        match l.classify(row) {
            CavityDof::U { i, j } if i > 0 && i < nx => {
                out.add(row, 1.0 / dt);
                out.rhs += u_prev[row] / dt;
                // -nu * Laplacian
                out.add(l.u(i + 1, j), -nu / (hx * hx));
                out.add(l.u(i - 1, j), -nu / (hx * hx));
                out.add(row, 2.0 * nu / (hx * hx) + 2.0 * nu / (hy * hy));
                if j > 0 {
                    out.add(l.u(i, j - 1), -nu / (hy * hy));
                } else {
                    out.add(row, nu / (hy * hy));
                }
                if j + 1 < ny {
                    out.add(l.u(i, j + 1), -nu / (hy * hy));
                } else {
                    out.add(row, nu / (hy * hy));
                    out.rhs += 2.0 * nu * lid / (hy * hy);
                }
                // (u^2)_x with the east/west face averages frozen once.
                let ue_bar = 0.5 * (u_bar[row] + u_bar[l.u(i + 1, j)]);
                let uw_bar = 0.5 * (u_bar[l.u(i - 1, j)] + u_bar[row]);
                out.add(row, 0.5 * (ue_bar - uw_bar) / hx);
                out.add(l.u(i + 1, j), 0.5 * ue_bar / hx);
                out.add(l.u(i - 1, j), -0.5 * uw_bar / hx);
                // (uv)_y with v frozen at the corners.
                let vn_bar = 0.5 * (u_bar[l.v(i - 1, j + 1)] + u_bar[l.v(i, j + 1)]);
                let vs_bar = 0.5 * (u_bar[l.v(i - 1, j)] + u_bar[l.v(i, j)]);
                if j + 1 < ny {
                    out.add(row, 0.5 * vn_bar / hy);
                    out.add(l.u(i, j + 1), 0.5 * vn_bar / hy);
                } else {
                    out.rhs -= lid * vn_bar / hy;
                }
                if j > 0 {
                    out.add(row, -0.5 * vs_bar / hy);
                    out.add(l.u(i, j - 1), -0.5 * vs_bar / hy);
                }
                out.add(l.p(i, j), 1.0 / hx);
                out.add(l.p(i - 1, j), -1.0 / hx);
            }
            CavityDof::V { i, j } if j > 0 && j < ny => {
                out.add(row, 1.0 / dt);
                out.rhs += u_prev[row] / dt;
                out.add(l.v(i, j + 1), -nu / (hy * hy));
                out.add(l.v(i, j - 1), -nu / (hy * hy));
                out.add(row, 2.0 * nu / (hx * hx) + 2.0 * nu / (hy * hy));
                if i + 1 < nx {
                    out.add(l.v(i + 1, j), -nu / (hx * hx));
                } else {
                    out.add(row, nu / (hx * hx));
                }
                if i > 0 {
                    out.add(l.v(i - 1, j), -nu / (hx * hx));
                } else {
                    out.add(row, nu / (hx * hx));
                }
                // (v^2)_y
                let vn_bar = 0.5 * (u_bar[row] + u_bar[l.v(i, j + 1)]);
                let vs_bar = 0.5 * (u_bar[l.v(i, j - 1)] + u_bar[row]);
                out.add(row, 0.5 * (vn_bar - vs_bar) / hy);
                out.add(l.v(i, j + 1), 0.5 * vn_bar / hy);
                out.add(l.v(i, j - 1), -0.5 * vs_bar / hy);
                // (uv)_x with u frozen at the corners.
                let ue_bar = 0.5 * (u_bar[l.u(i + 1, j - 1)] + u_bar[l.u(i + 1, j)]);
                let uw_bar = 0.5 * (u_bar[l.u(i, j - 1)] + u_bar[l.u(i, j)]);
                if i + 1 < nx {
                    out.add(row, 0.5 * ue_bar / hx);
                    out.add(l.v(i + 1, j), 0.5 * ue_bar / hx);
                }
                if i > 0 {
                    out.add(row, -0.5 * uw_bar / hx);
                    out.add(l.v(i - 1, j), -0.5 * uw_bar / hx);
                }
                out.add(l.p(i, j), 1.0 / hy);
                out.add(l.p(i, j - 1), -1.0 / hy);
            }
            CavityDof::P { i, j } => {
                out.add(l.u(i + 1, j), 1.0 / hx);
                out.add(l.u(i, j), -1.0 / hx);
                out.add(l.v(i, j + 1), 1.0 / hy);
                out.add(l.v(i, j), -1.0 / hy);
            }
            // Wall-normal velocity: pinned to zero.
            _ => out.add(row, 1.0 / dt),
        }
    }

    /// Nonlinear residual evaluated field by field, independently of the
    /// linearized row assembly.
    pub fn cavity_residual(&self, u: &[f64], u_prev: &[f64], mu: &Parameter) -> Result<Vec<f64>, FomError> {
        self.check_state(u)?;
        self.check_state(u_prev)?;
        let l = &self.layout;
        let (nx, ny, hx, hy) = (l.n_x, l.n_y, l.hx, l.hy);
        let dt = self.time.dt;
        let nu = 1.0 / mu.first();
        let lid = self.lid;
        let uu = |i: usize, j: usize| u[l.u(i, j)];
        let vv = |i: usize, j: usize| u[l.v(i, j)];
        let pp = |i: usize, j: usize| u[l.p(i, j)];
        let mut r = vec![0.0; l.n_dof()];
        for j in 0..ny {
            for i in 0..=nx {
                let k = l.u(i, j);
                if i == 0 || i == nx {
                    r[k] = u[k] / dt;
                    continue;
                }
                let c = uu(i, j);
                let south = if j > 0 { uu(i, j - 1) } else { -c };
                let north = if j + 1 < ny { uu(i, j + 1) } else { 2.0 * lid - c };
                let lap = (uu(i + 1, j) - 2.0 * c + uu(i - 1, j)) / (hx * hx) + (north - 2.0 * c + south) / (hy * hy);
                let ue = 0.5 * (c + uu(i + 1, j));
                let uw = 0.5 * (uu(i - 1, j) + c);
                let u_ncorner = if j + 1 < ny { 0.5 * (c + uu(i, j + 1)) } else { lid };
                let u_scorner = if j > 0 { 0.5 * (uu(i, j - 1) + c) } else { 0.0 };
                let v_ncorner = 0.5 * (vv(i - 1, j + 1) + vv(i, j + 1));
                let v_scorner = 0.5 * (vv(i - 1, j) + vv(i, j));
                let conv = (ue * ue - uw * uw) / hx + (u_ncorner * v_ncorner - u_scorner * v_scorner) / hy;
                let grad_p = (pp(i, j) - pp(i - 1, j)) / hx;
                r[k] = (c - u_prev[k]) / dt - nu * lap + conv + grad_p;
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let k = l.v(i, j);
                if j == 0 || j == ny {
                    r[k] = u[k] / dt;
                    continue;
                }
                let c = vv(i, j);
                let east = if i + 1 < nx { vv(i + 1, j) } else { -c };
                let west = if i > 0 { vv(i - 1, j) } else { -c };
                let lap = (east - 2.0 * c + west) / (hx * hx) + (vv(i, j + 1) - 2.0 * c + vv(i, j - 1)) / (hy * hy);
                let vn = 0.5 * (c + vv(i, j + 1));
                let vs = 0.5 * (vv(i, j - 1) + c);
                let u_ecorner = 0.5 * (uu(i + 1, j - 1) + uu(i + 1, j));
                let u_wcorner = 0.5 * (uu(i, j - 1) + uu(i, j));
                let v_ecorner = if i + 1 < nx { 0.5 * (c + vv(i + 1, j)) } else { 0.0 };
                let v_wcorner = if i > 0 { 0.5 * (vv(i - 1, j) + c) } else { 0.0 };
                let conv = (vn * vn - vs * vs) / hy + (u_ecorner * v_ecorner - u_wcorner * v_wcorner) / hx;
                let grad_p = (pp(i, j) - pp(i, j - 1)) / hy;
                r[k] = (c - u_prev[k]) / dt - nu * lap + conv + grad_p;
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                r[l.p(i, j)] = (uu(i + 1, j) - uu(i, j)) / hx + (vv(i, j + 1) - vv(i, j)) / hy;
            }
        }
        Ok(r)
    }

    /// One Picard solve of the linearized coupled system at `u_bar`.
    fn solve_linearized(&self, u_bar: &[f64], u_prev: &[f64], nu: f64) -> Result<Vec<f64>, FomError> {
        let l = &self.layout;
        let n = l.n_dof();
        let mut band = BandedMatrix::zeros(n, self.kl, self.ku);
        let mut rhs = vec![0.0; n];
        let mut row = LinearizedRow::default();
        // The continuity rows sum to the (zero) wall flux, so one of them is
        // replaced by a pressure pin.
        let pinned = l.p(0, 0);
        for r in 0..n {
            let pr = self.band_pos[r];
            if r == pinned {
                band.add(pr, pr, 1.0);
                continue;
            }
            self.linearized_row(r, u_bar, u_prev, nu, &mut row);
            for &(c, a) in &row.entries {
                band.add(pr, self.band_pos[c], a);
            }
            rhs[pr] = row.rhs;
        }
        let lu = band.factor()?;
        lu.solve_in_place(&mut rhs);
        let mut w: Vec<f64> = (0..n).map(|d| rhs[self.band_pos[d]]).collect();
        let pr = l.pressure_range();
        let mean = w[pr.clone()].iter().sum::<f64>() / pr.len() as f64;
        for p in &mut w[pr] {
            *p -= mean;
        }
        Ok(w)
    }

    /// Backward-Euler step from `u_prev`: returns the new state and the
    /// number of Picard iterations used.
    pub fn implicit_step(&self, u_prev: &[f64], mu: &Parameter, step: usize) -> Result<(Vec<f64>, usize), FomError> {
        let nu = 1.0 / mu.first();
        let mut u_bar = u_prev.to_vec();
        let mut update = f64::INFINITY;
        for it in 1..=PICARD_MAX_ITERATIONS {
            let w = self.solve_linearized(&u_bar, u_prev, nu)?;
            update = w.iter().zip(&u_bar).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if let Some(v) = w.iter().find(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
                return Err(FomError::Diverged { step, value: v.abs() });
            }
            u_bar = w;
            if update <= PICARD_TOLERANCE {
                let res = self.cavity_residual(&u_bar, u_prev, mu)?;
                if max_abs(&res) <= PICARD_TOLERANCE {
                    return Ok((u_bar, it));
                }
            }
        }
        Err(FomError::PicardNotConverged {
            step,
            iterations: PICARD_MAX_ITERATIONS,
            update,
        })
    }

    /// Full-order trajectory together with per-step solver statistics.
    pub fn solve_trajectory_with_stats(&self, mu: &Parameter) -> Result<(SnapshotMatrix, PicardStats), FomError> {
        let n = self.layout.n_dof();
        let steps = self.time.n_steps;
        let mut data = Vec::with_capacity(n * (steps + 1));
        let mut u = self.initial_condition(mu);
        data.extend_from_slice(&u);
        let mut stats = PicardStats::default();
        for step in 1..=steps {
            let (next, its) = self.implicit_step(&u, mu, step)?;
            let res = self.cavity_residual(&next, &u, mu)?;
            stats.iterations.push(its);
            stats
                .max_continuity_residual
                .push(max_abs(&res[self.layout.continuity_rows()]));
            data.extend_from_slice(&next);
            u = next;
        }
        debug!(
            "cavity Re = {mu}: {} Picard iterations over {steps} steps",
            stats.iterations.iter().sum::<usize>()
        );
        Ok((
            SnapshotMatrix::new(DenseMatrix::from_col_major(n, steps + 1, data)?),
            stats,
        ))
    }
}

impl FullOrderProblem for CavityProblem {
    fn n_dof(&self) -> usize {
        self.layout.n_dof()
    }

    fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    fn spatial_grid(&self) -> SpatialGrid {
        SpatialGrid::Mac2d {
            n_x: self.layout.n_x,
            n_y: self.layout.n_y,
        }
    }

    fn scheme(&self) -> TimeScheme {
        TimeScheme::Implicit
    }

    fn spec(&self) -> ProblemSpec {
        ProblemSpec::Cavity {
            n_x: self.layout.n_x,
            n_y: self.layout.n_y,
            dt: self.time.dt,
            t_final: self.time.t_final,
        }
    }

    fn initial_condition(&self, _mu: &Parameter) -> Vec<f64> {
        vec![0.0; self.layout.n_dof()]
    }

    /// Every row through the linearized assembly at `u_bar = u_i`, which is
    /// bitwise the sampled route. [`CavityProblem::cavity_residual`] is the
    /// independent field-wise evaluation.
    fn residual(&self, u_i: &[f64], u_prev: &[f64], t_i: f64, mu: &Parameter) -> Result<Vec<f64>, FomError> {
        let rows: Vec<usize> = (0..self.layout.n_dof()).collect();
        self.residual_rows(u_i, u_prev, t_i, mu, &rows)
    }

    fn residual_rows(
        &self,
        u_i: &[f64],
        u_prev: &[f64],
        _t_i: f64,
        mu: &Parameter,
        rows: &[usize],
    ) -> Result<Vec<f64>, FomError> {
        self.check_state(u_i)?;
        self.check_state(u_prev)?;
        self.check_rows(rows)?;
        let nu = 1.0 / mu.first();
        let mut row = LinearizedRow::default();
        Ok(rows
            .iter()
            .map(|&r| {
                self.linearized_row(r, u_i, u_prev, nu, &mut row);
                row.apply(u_i)
            })
            .collect())
    }

    fn functional_rows(&self, v: &[f64], _t: f64, mu: &Parameter, rows: &[usize]) -> Result<Vec<f64>, FomError> {
        // M v / dt - P(v): the residual with a zero history term.
        self.check_state(v)?;
        self.check_rows(rows)?;
        let nu = 1.0 / mu.first();
        let zero = vec![0.0; self.layout.n_dof()];
        let mut row = LinearizedRow::default();
        Ok(rows
            .iter()
            .map(|&r| {
                self.linearized_row(r, v, &zero, nu, &mut row);
                row.apply(v)
            })
            .collect())
    }

    fn stencil_support(&self, rows: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = rows.iter().flat_map(|&r| self.row_support(r)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn linearized_rows(
        &self,
        u_bar: &[f64],
        u_prev: &[f64],
        _t_i: f64,
        mu: &Parameter,
        rows: &[usize],
    ) -> Result<Vec<LinearizedRow>, FomError> {
        self.check_state(u_bar)?;
        self.check_state(u_prev)?;
        self.check_rows(rows)?;
        let nu = 1.0 / mu.first();
        Ok(rows
            .iter()
            .map(|&r| {
                let mut row = LinearizedRow::default();
                self.linearized_row(r, u_bar, u_prev, nu, &mut row);
                row
            })
            .collect())
    }

    fn solve_trajectory(&self, mu: &Parameter) -> Result<SnapshotMatrix, FomError> {
        self.solve_trajectory_with_stats(mu).map(|(s, _)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gather;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(n: usize, dt: f64, t: f64) -> CavityProblem {
        CavityProblem::new(n, n, TimeGrid::new(dt, t).unwrap()).unwrap()
    }

    #[test]
    fn layout_counts() {
        let l = CavityLayout::new(4, 3);
        assert_eq!(l.n_u(), 15);
        assert_eq!(l.n_v(), 16);
        assert_eq!(l.n_p(), 12);
        assert_eq!(l.n_dof(), 43);
        for d in 0..l.n_dof() {
            let back = match l.classify(d) {
                CavityDof::U { i, j } => l.u(i, j),
                CavityDof::V { i, j } => l.v(i, j),
                CavityDof::P { i, j } => l.p(i, j),
            };
            assert_eq!(back, d);
        }
    }

    #[test]
    fn zero_state_zero_lid_has_zero_residual() {
        let p = small(6, 0.05, 1.0).with_lid_velocity(0.0);
        let z = vec![0.0; p.n_dof()];
        let r = p.residual(&z, &z, 0.05, &Parameter::scalar(100.0)).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discrete_stream_function_is_divergence_free() {
        let p = small(8, 0.05, 1.0);
        let l = *p.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Stream function at grid vertices, zero on the boundary.
        let mut psi = vec![vec![0.0; l.n_y + 1]; l.n_x + 1];
        for row in psi.iter_mut().take(l.n_x).skip(1) {
            for v in row.iter_mut().take(l.n_y).skip(1) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let mut state = vec![0.0; l.n_dof()];
        for j in 0..l.n_y {
            for i in 0..=l.n_x {
                state[l.u(i, j)] = (psi[i][j + 1] - psi[i][j]) / l.hy;
            }
        }
        for j in 0..=l.n_y {
            for i in 0..l.n_x {
                state[l.v(i, j)] = -(psi[i + 1][j] - psi[i][j]) / l.hx;
            }
        }
        let r = p.residual(&state, &state, 0.05, &Parameter::scalar(50.0)).unwrap();
        for k in l.continuity_rows() {
            assert!(r[k].abs() < 1e-12, "{}", r[k]);
        }
    }

    #[test]
    fn constant_pressure_offset_changes_nothing() {
        let p = small(6, 0.05, 1.0);
        let l = *p.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..l.n_dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let prev: Vec<f64> = (0..l.n_dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = a.clone();
        for k in l.pressure_range() {
            b[k] += 3.7;
        }
        let mu = Parameter::scalar(20.0);
        let ra = p.residual(&a, &prev, 0.05, &mu).unwrap();
        let rb = p.residual(&b, &prev, 0.05, &mu).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn assembled_rows_match_fieldwise_residual() {
        let p = small(7, 0.05, 1.0);
        let n = p.n_dof();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = Parameter::scalar(37.0);
        for _ in 0..30 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let full = p.cavity_residual(&a, &b, &mu).unwrap();
            let rows: Vec<usize> = (0..n).collect();
            let sub = p.residual_rows(&a, &b, 0.1, &mu, &rows).unwrap();
            let g = gather(&full, &rows).unwrap();
            for (x, y) in sub.iter().zip(g.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn stencil_support_is_sufficient() {
        // Perturbing any entry outside the support leaves the row unchanged.
        let p = small(5, 0.05, 1.0);
        let n = p.n_dof();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu = Parameter::scalar(10.0);
        for r in (0..n).step_by(7) {
            let support = p.stencil_support(&[r]);
            let base = p.residual_rows(&a, &a, 0.0, &mu, &[r]).unwrap()[0];
            let mut b = a.clone();
            for (k, v) in b.iter_mut().enumerate() {
                if support.binary_search(&k).is_err() {
                    *v = 1e3;
                }
            }
            let after = p.residual_rows(&b, &b, 0.0, &mu, &[r]).unwrap()[0];
            assert_eq!(base, after, "row {r}");
        }
    }

    #[test]
    fn zero_lid_gives_zero_trajectory() {
        let p = small(6, 0.1, 0.5).with_lid_velocity(0.0);
        let traj = p.solve_trajectory(&Parameter::scalar(100.0)).unwrap();
        assert!(traj.matrix().as_col_major().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn converged_step_has_small_residual_and_divergence() {
        let p = small(10, 0.05, 0.5);
        let mu = Parameter::scalar(80.0);
        let (traj, stats) = p.solve_trajectory_with_stats(&mu).unwrap();
        assert!(stats.iterations.iter().all(|&k| k <= PICARD_MAX_ITERATIONS));
        for step in 1..traj.n_times() {
            let r = p.residual(traj.state(step), traj.state(step - 1), 0.0, &mu).unwrap();
            assert!(max_abs(&r) <= PICARD_TOLERANCE);
        }
        assert!(stats.max_continuity_residual.iter().all(|&c| c <= PICARD_TOLERANCE));
        // The lid drags the top row of u forward.
        let l = p.layout();
        let last = traj.state(traj.n_times() - 1);
        assert!(last[l.u(5, l.n_y - 1)] > 0.1);
        let pressure_mean: f64 = last[l.pressure_range()].iter().sum::<f64>() / l.n_p() as f64;
        assert!(pressure_mean.abs() < 1e-12);
    }

    #[test]
    fn functional_is_residual_without_history() {
        let p = small(5, 0.05, 1.0);
        let n = p.n_dof();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu = Parameter::scalar(15.0);
        let rows: Vec<usize> = (0..n).collect();
        let f = p.functional_rows(&v, 0.0, &mu, &rows).unwrap();
        let r = p.residual(&v, &vec![0.0; n], 0.0, &mu).unwrap();
        for (a, b) in f.iter().zip(&r) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
