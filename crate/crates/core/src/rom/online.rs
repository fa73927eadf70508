//! The hyper-reduced online solver.

use log::trace;

use super::{segment_error, ReducedBasis, ReducedModel, RomError};
use crate::fom::{FullOrderProblem, Parameter, SnapshotMatrix, TimeScheme, DIVERGENCE_THRESHOLD, PICARD_MAX_ITERATIONS, PICARD_TOLERANCE};
use crate::numerics::{DenseMatrix, DenseVector, QrFactorization};

/// What to do when the reduced Picard loop hits its iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardPolicy {
    /// Fail with [`RomError::PicardNotConverged`].
    Strict,
    /// Keep the last iterate and count the step in the diagnostics.
    Lenient,
}

/// Per-time outputs of an online solve that do not need the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineDiagnostics {
    /// `max |r|` over the collocation rows, indexed by time; entry 0 is 0.
    /// Infinite from the step where the reduced state blew up onward.
    pub errors: Vec<f64>,
    /// Picard iterations per time index (0 for explicit problems).
    pub iterations: Vec<usize>,
    pub unconverged_steps: usize,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSolution {
    /// `n x (N_t + 1)`; columns after a blow-up are zero.
    pub coefficients: DenseMatrix,
    pub diagnostics: OnlineDiagnostics,
}

impl OnlineSolution {
    pub fn errors(&self) -> &[f64] {
        &self.diagnostics.errors
    }

    pub fn coefficients_at(&self, time_index: usize) -> &[f64] {
        self.coefficients.column(time_index)
    }

    /// `V C`, one full state per time index.
    pub fn lift(&self, basis: &ReducedBasis) -> Result<SnapshotMatrix, RomError> {
        let v = basis.matrix();
        let (n_dof, n, cols) = (v.rows(), v.cols(), self.coefficients.cols());
        let mut data = vec![0.0; n_dof * cols];
        for t in 0..cols {
            let c = self.coefficients.column(t);
            let out = &mut data[t * n_dof..(t + 1) * n_dof];
            for k in 0..n {
                let ck = c[k];
                if ck != 0.0 {
                    for (o, vk) in out.iter_mut().zip(v.column(k)) {
                        *o += ck * vk;
                    }
                }
            }
        }
        Ok(SnapshotMatrix::new(DenseMatrix::from_col_major(n_dof, cols, data)?))
    }
}

/// Restricted operators of one segment, built once per model.
struct SegmentOperator {
    rows: Vec<usize>,
    support: Vec<usize>,
    /// `V` at the support rows, row-major `|support| x n`.
    v_support: Vec<f64>,
    /// `V` at the collocation rows, row-major `|rows| x n`.
    v_rows: Vec<f64>,
    /// Factorization of `V(rows, :)`; the explicit system matrix.
    qr: Option<QrFactorization>,
    /// Grid index to position in `support` (implicit problems).
    position: Vec<usize>,
}

/// A reduced model bound to its full-order problem, ready to march.
pub struct OnlineSolver<'a> {
    model: &'a ReducedModel,
    problem: &'a dyn FullOrderProblem,
    segments: Vec<SegmentOperator>,
    projector: QrFactorization,
}

fn rows_of(v: &DenseMatrix, rows: &[usize]) -> Vec<f64> {
    let n = v.cols();
    let mut out = vec![0.0; rows.len() * n];
    for (p, &r) in rows.iter().enumerate() {
        for k in 0..n {
            out[p * n + k] = v.get(r, k);
        }
    }
    out
}

impl<'a> OnlineSolver<'a> {
    pub fn new(model: &'a ReducedModel, problem: &'a dyn FullOrderProblem) -> Result<Self, RomError> {
        if problem.n_dof() != model.n_dof() {
            return Err(RomError::DimensionMismatch(format!(
                "model has {} degrees of freedom, problem {}",
                model.n_dof(),
                problem.n_dof()
            )));
        }
        if problem.time_grid().n_steps != model.partition.n_steps() {
            return Err(RomError::DimensionMismatch(format!(
                "model partitions {} steps, problem has {}",
                model.partition.n_steps(),
                problem.time_grid().n_steps
            )));
        }
        model.check_solvable()?;
        let v = model.basis.matrix();
        let implicit = problem.scheme() == TimeScheme::Implicit;
        let mut segments = Vec::with_capacity(model.partition.n_segments());
        for seg in model.collocation.segments() {
            let rows = seg.selector().to_vec();
            let support = problem.stencil_support(&rows);
            let qr = if implicit {
                None
            } else {
                Some(QrFactorization::new(&v.select_rows(&rows)?)?)
            };
            let mut position = Vec::new();
            if implicit {
                position = vec![usize::MAX; model.n_dof()];
                for (p, &s) in support.iter().enumerate() {
                    position[s] = p;
                }
            }
            segments.push(SegmentOperator {
                v_support: rows_of(v, &support),
                v_rows: rows_of(v, &rows),
                rows,
                support,
                qr,
                position,
            });
        }
        Ok(Self {
            model,
            problem,
            segments,
            projector: QrFactorization::new(v)?,
        })
    }

    pub fn model(&self) -> &ReducedModel {
        self.model
    }

    /// Least-squares coefficients of the initial condition.
    pub fn initial_coefficients(&self, mu: &Parameter) -> Vec<f64> {
        self.projector.solve(&self.problem.initial_condition(mu))
    }

    /// Marches every time step, keeping the coefficients.
    pub fn solve(&self, mu: &Parameter, policy: PicardPolicy) -> Result<OnlineSolution, RomError> {
        self.solve_until(mu, policy, self.model.partition.n_steps())
    }

    /// Marches time indices `1..=last` only.
    pub fn solve_until(&self, mu: &Parameter, policy: PicardPolicy, last: usize) -> Result<OnlineSolution, RomError> {
        let n = self.model.n();
        let mut coeffs = Vec::with_capacity(n * (last + 1));
        let diagnostics = self.march(mu, policy, last, |c| coeffs.extend_from_slice(c))?;
        coeffs.resize(n * (last + 1), 0.0);
        Ok(OnlineSolution {
            coefficients: DenseMatrix::from_col_major(n, last + 1, coeffs)?,
            diagnostics,
        })
    }

    /// Marches every time step but keeps only the diagnostics.
    pub fn indicators(&self, mu: &Parameter, policy: PicardPolicy) -> Result<OnlineDiagnostics, RomError> {
        self.march(mu, policy, self.model.partition.n_steps(), |_| {})
    }

    fn march(
        &self,
        mu: &Parameter,
        policy: PicardPolicy,
        last: usize,
        mut keep: impl FnMut(&[f64]),
    ) -> Result<OnlineDiagnostics, RomError> {
        let partition = &self.model.partition;
        let mut errors = vec![0.0; last + 1];
        let mut iterations = vec![0usize; last + 1];
        let mut unconverged = 0;
        let mut c = self.initial_coefficients(mu);
        keep(&c);
        let mut scratch = Scratch::new(self.model.n_dof());
        for i in 1..=last {
            let j = partition.segment_of(i)?;
            let step = self
                .step_with(j, &c, i, mu, &mut scratch)
                .map_err(|e| RomError::AtTime {
                    time_index: i,
                    source: Box::new(e),
                })?;
            let blown = step.coefficients.iter().any(|x| !(x.abs() <= DIVERGENCE_THRESHOLD));
            if blown {
                trace!("reduced state diverged at time index {i} for mu = {mu}");
                for e in &mut errors[i..] {
                    *e = f64::INFINITY;
                }
                return Ok(OnlineDiagnostics {
                    errors,
                    iterations,
                    unconverged_steps: unconverged,
                    diverged_at: Some(i),
                });
            }
            if !step.converged {
                if policy == PicardPolicy::Strict {
                    return Err(RomError::AtTime {
                        time_index: i,
                        source: Box::new(RomError::PicardNotConverged {
                            time_index: i,
                            update: step.last_update,
                        }),
                    });
                }
                unconverged += 1;
            }
            errors[i] = step.error;
            iterations[i] = step.iterations;
            c = step.coefficients;
            keep(&c);
        }
        Ok(OnlineDiagnostics {
            errors,
            iterations,
            unconverged_steps: unconverged,
            diverged_at: None,
        })
    }

    /// One reduced step from `c_prev` to time index `time_index`, using the
    /// collocation rows of `segment`.
    pub fn step(&self, segment: usize, c_prev: &[f64], time_index: usize, mu: &Parameter) -> Result<StepOutcome, RomError> {
        let mut scratch = Scratch::new(self.model.n_dof());
        self.step_with(segment, c_prev, time_index, mu, &mut scratch)
    }

    fn step_with(
        &self,
        segment: usize,
        c_prev: &[f64],
        time_index: usize,
        mu: &Parameter,
        scratch: &mut Scratch,
    ) -> Result<StepOutcome, RomError> {
        let op = &self.segments[segment];
        let n = self.model.n();
        let dt = self.problem.time_grid().dt;
        let t_i = self.problem.time_grid().time(time_index);
        fill_support(op, c_prev, n, &mut scratch.prev);
        match &op.qr {
            Some(qr) => {
                let update = self.problem.explicit_update_rows(&scratch.prev, t_i - dt, mu, &op.rows)?;
                let c = qr.solve_into(&update, &mut scratch.work);
                let mut err = 0.0f64;
                for (p, u) in update.iter().enumerate() {
                    let vc: f64 = op.v_rows[p * n..(p + 1) * n].iter().zip(&c).map(|(a, b)| a * b).sum();
                    let r = (vc - u) / dt;
                    err = if r.is_nan() { f64::INFINITY } else { err.max(r.abs()) };
                }
                Ok(StepOutcome {
                    coefficients: c,
                    error: err,
                    iterations: 0,
                    converged: true,
                    last_update: 0.0,
                })
            }
            None => self.picard_step(op, c_prev, t_i, mu, scratch),
        }
    }

    fn picard_step(
        &self,
        op: &SegmentOperator,
        c_prev: &[f64],
        t_i: f64,
        mu: &Parameter,
        scratch: &mut Scratch,
    ) -> Result<StepOutcome, RomError> {
        let n = self.model.n();
        let m = op.rows.len();
        let mut c = c_prev.to_vec();
        let mut update = f64::INFINITY;
        let mut iterations = 0;
        let mut b = DenseMatrix::zeros(m, n);
        let mut rhs = vec![0.0; m];
        while iterations < PICARD_MAX_ITERATIONS {
            iterations += 1;
            fill_support(op, &c, n, &mut scratch.bar);
            let lin = self.problem.linearized_rows(&scratch.bar, &scratch.prev, t_i, mu, &op.rows)?;
            for (r, row) in lin.iter().enumerate() {
                for k in 0..n {
                    b.set(r, k, 0.0);
                }
                for &(col, a) in &row.entries {
                    let p = op.position[col];
                    let vrow = &op.v_support[p * n..(p + 1) * n];
                    for k in 0..n {
                        b.set(r, k, b.get(r, k) + a * vrow[k]);
                    }
                }
                rhs[r] = row.rhs;
            }
            let next = QrFactorization::new(&b)?.solve_into(&rhs, &mut scratch.work);
            update = next.iter().zip(&c).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            c = next;
            if !c.iter().all(|x| x.abs() <= DIVERGENCE_THRESHOLD) {
                break;
            }
            if update <= PICARD_TOLERANCE {
                break;
            }
        }
        let converged = update <= PICARD_TOLERANCE;
        let mut error = f64::INFINITY;
        if c.iter().all(|x| x.is_finite()) {
            fill_support(op, &c, n, &mut scratch.bar);
            let r = self.problem.residual_rows(&scratch.bar, &scratch.prev, t_i, mu, &op.rows)?;
            error = segment_error(&r);
        }
        Ok(StepOutcome {
            coefficients: c,
            error,
            iterations,
            converged,
            last_update: update,
        })
    }
}

/// Result of one reduced time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub coefficients: Vec<f64>,
    /// `max |r|` over the collocation rows.
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
}

struct Scratch {
    prev: Vec<f64>,
    bar: Vec<f64>,
    work: Vec<f64>,
}

impl Scratch {
    fn new(n_dof: usize) -> Self {
        Self {
            prev: vec![0.0; n_dof],
            bar: vec![0.0; n_dof],
            work: Vec::new(),
        }
    }
}

/// Writes `V c` into `out` at the support rows only.
fn fill_support(op: &SegmentOperator, c: &[f64], n: usize, out: &mut [f64]) {
    for (p, &s) in op.support.iter().enumerate() {
        out[s] = op.v_support[p * n..(p + 1) * n].iter().zip(c).map(|(a, b)| a * b).sum();
    }
}

/// One reduced step at `time_index` from `c_prev`, on the segment that
/// contains `time_index`.
pub fn online_step(
    model: &ReducedModel,
    problem: &dyn FullOrderProblem,
    c_prev: &[f64],
    time_index: usize,
    mu: &Parameter,
) -> Result<DenseVector, RomError> {
    if c_prev.len() != model.n() {
        return Err(RomError::DimensionMismatch(format!(
            "{} coefficients for {} basis vectors",
            c_prev.len(),
            model.n()
        )));
    }
    let solver = OnlineSolver::new(model, problem)?;
    let j = model.partition.segment_of(time_index)?;
    let out = solver.step(j, c_prev, time_index, mu)?;
    if !out.converged {
        return Err(RomError::PicardNotConverged {
            time_index,
            update: out.last_update,
        });
    }
    Ok(DenseVector::new(out.coefficients)?)
}

/// Full-order residual of the lifted states at the collocation rows of the
/// segment containing `time_index`.
pub fn reduced_residual(
    model: &ReducedModel,
    problem: &dyn FullOrderProblem,
    c_i: &[f64],
    c_prev: &[f64],
    time_index: usize,
    mu: &Parameter,
) -> Result<DenseVector, RomError> {
    let j = model.partition.segment_of(time_index)?;
    let u_i = super::lift(&model.basis, c_i)?;
    let u_prev = super::lift(&model.basis, c_prev)?;
    let t_i = problem.time_grid().time(time_index);
    let r = problem.residual_rows(&u_i, &u_prev, t_i, mu, model.collocation.selector(j))?;
    Ok(DenseVector::new(r)?)
}

/// Online solve over the whole time grid; reduced Picard failures are errors.
pub fn rom_solve_trajectory(
    model: &ReducedModel,
    problem: &dyn FullOrderProblem,
    mu: &Parameter,
) -> Result<OnlineSolution, RomError> {
    OnlineSolver::new(model, problem)?.solve(mu, PicardPolicy::Strict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{fom_residual, BurgersProblem, CavityProblem, TimeGrid};
    use crate::numerics::{gather, NumericsError};
    use crate::rom::{partition_time, relative_error, ReducedBasis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn burgers(n: usize, dt: f64, t: f64) -> BurgersProblem {
        BurgersProblem::new(n, TimeGrid::new(dt, t).unwrap()).unwrap()
    }

    #[test]
    fn full_snapshot_model_reproduces_burgers_trajectory() {
        let p = burgers(40, 1e-3, 0.2);
        let mu = Parameter::scalar(0.05);
        let traj = p.solve_trajectory(&mu).unwrap();
        let model = ReducedModel::from_trajectory(&p, &traj, &mu).unwrap();
        let sol = rom_solve_trajectory(&model, &p, &mu).unwrap();
        let lifted = sol.lift(&model.basis).unwrap();
        let e = relative_error(traj.matrix(), lifted.matrix()).unwrap();
        assert!(e <= 1e-9, "relative error {e:e}");
        // Components dropped as dependent (below 1e-10 relative) show up in
        // the residual divided by dt.
        let worst = sol.errors().iter().fold(0.0f64, |m, &x| m.max(x));
        assert!(worst <= 1e-6, "n = {}, worst {worst:e}", model.n());
    }

    #[test]
    fn zero_steps_gives_projection_only() {
        let p = burgers(20, 0.01, 0.0);
        let mu = Parameter::scalar(0.05);
        let traj = p.solve_trajectory(&mu).unwrap();
        let mut basis = ReducedBasis::empty(21);
        basis.push_snapshot(traj.state(0), &mu, 0).unwrap();
        let partition = crate::rom::TimePartition::from_bounds(0, vec![]).unwrap();
        let model = ReducedModel::with_full_collocation(p.spec(), basis, partition);
        let sol = rom_solve_trajectory(&model, &p, &mu).unwrap();
        assert_eq!(sol.coefficients.cols(), 1);
        let lifted = sol.lift(&model.basis).unwrap();
        assert!(relative_error(traj.matrix(), lifted.matrix()).unwrap() < 1e-14);
    }

    #[test]
    fn fixed_point_basis_gives_unit_coefficient() {
        // u = 2 everywhere is a fixed point of the inflow-2 march.
        let p = burgers(30, 1e-3, 0.01);
        let v = DenseMatrix::from_col_major(31, 1, vec![2.0; 31]).unwrap();
        let basis = ReducedBasis::from_matrix(v, vec![(Parameter::scalar(0.02), 0)]).unwrap();
        let model = ReducedModel::with_full_collocation(p.spec(), basis, partition_time(10, 1).unwrap());
        let c = online_step(&model, &p, &[1.0], 3, &Parameter::scalar(0.02)).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn span_member_is_stepped_exactly() {
        let p = burgers(30, 1e-3, 0.01);
        let mu = Parameter::scalar(0.02);
        let traj = p.solve_trajectory(&mu).unwrap();
        let cols = [traj.state(4), traj.state(5)];
        let basis = ReducedBasis::from_matrix(
            DenseMatrix::from_columns(31, &cols).unwrap(),
            vec![(mu.clone(), 4), (mu.clone(), 5)],
        )
        .unwrap();
        let model = ReducedModel::with_full_collocation(p.spec(), basis, partition_time(10, 1).unwrap());
        let c = online_step(&model, &p, &[1.0, 0.0], 5, &mu).unwrap();
        assert!(c[0].abs() < 1e-10 && (c[1] - 1.0).abs() < 1e-10, "{:?}", c.as_slice());
    }

    #[test]
    fn zero_column_on_rows_is_rank_deficient() {
        let p = burgers(10, 1e-3, 0.01);
        let mut v = DenseMatrix::zeros(11, 2);
        v.set(3, 0, 1.0);
        v.set(9, 1, 1.0);
        let basis = ReducedBasis::from_matrix(v, vec![(Parameter::scalar(0.01), 0); 2]).unwrap();
        let mut model = ReducedModel::new(p.spec(), basis, partition_time(10, 1).unwrap());
        model.collocation.add_solution_point(0, 3).unwrap();
        model.collocation.add_solution_point(0, 4).unwrap();
        let err = online_step(&model, &p, &[0.0, 0.0], 1, &Parameter::scalar(0.01)).unwrap_err();
        assert!(matches!(err, RomError::Numerics(NumericsError::RankDeficient { .. })), "{err}");
    }

    #[test]
    fn reduced_residual_matches_gathered_full_residual() {
        let p = burgers(25, 1e-3, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<f64> = (0..26 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let basis =
            ReducedBasis::from_matrix(DenseMatrix::from_col_major(26, 4, data).unwrap(), vec![(Parameter::scalar(0.0), 0); 4])
                .unwrap();
        let mut model = ReducedModel::new(p.spec(), basis, partition_time(50, 2).unwrap());
        for (j, rows) in [[0usize, 4, 9, 17, 25], [2, 3, 11, 12, 20]].iter().enumerate() {
            for &r in rows {
                model.collocation.add_solution_point(j, r).unwrap();
            }
        }
        let mu = Parameter::scalar(0.03);
        for _ in 0..20 {
            let ci: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cp: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = rng.gen_range(1..=50);
            let r = reduced_residual(&model, &p, &ci, &cp, t, &mu).unwrap();
            let ui = crate::rom::lift(&model.basis, &ci).unwrap();
            let up = crate::rom::lift(&model.basis, &cp).unwrap();
            let full = fom_residual(&p, &ui, &up, p.time_grid().time(t), &mu).unwrap();
            let j = model.partition.segment_of(t).unwrap();
            let g = gather(&full, model.collocation.selector(j)).unwrap();
            for (a, b) in r.iter().zip(g.iter()) {
                assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn square_system_interpolates() {
        let p = burgers(30, 1e-3, 0.02);
        let mu = Parameter::scalar(0.04);
        let traj = p.solve_trajectory(&mu).unwrap();
        let mut basis = ReducedBasis::empty(31);
        for t in [0, 7, 14, 20] {
            basis.push_snapshot(traj.state(t), &mu, t).unwrap();
        }
        let mut model = ReducedModel::new(p.spec(), basis, partition_time(20, 1).unwrap());
        for r in [1, 5, 10, 15] {
            model.collocation.add_solution_point(0, r).unwrap();
        }
        let sol = rom_solve_trajectory(&model, &p, &mu).unwrap();
        for t in 1..=20 {
            let r = reduced_residual(&model, &p, sol.coefficients_at(t), sol.coefficients_at(t - 1), t, &mu).unwrap();
            assert!(crate::numerics::max_abs(&r) <= 1e-10 * 1e3, "{r:?}");
        }
    }

    #[test]
    fn basis_change_leaves_lifted_solution_unchanged() {
        let p = burgers(30, 1e-3, 0.03);
        let mu = Parameter::scalar(0.03);
        let traj = p.solve_trajectory(&mu).unwrap();
        let mut basis = ReducedBasis::empty(31);
        for t in [0, 10, 20, 30] {
            basis.push_snapshot(traj.state(t), &mu, t).unwrap();
        }
        let rows = [0usize, 3, 6, 9, 12, 15, 18, 21, 27, 30];
        let build = |b: ReducedBasis| {
            let mut m = ReducedModel::new(p.spec(), b, partition_time(30, 1).unwrap());
            for &r in &rows {
                m.collocation.add_solution_point(0, r).unwrap();
            }
            m
        };
        let ortho = build(basis.clone());
        let raw = {
            // V R is the raw snapshot matrix.
            let v = basis.matrix();
            let r = basis.r_factor();
            let mut vr = DenseMatrix::zeros(v.rows(), v.cols());
            for i in 0..v.rows() {
                for k in 0..v.cols() {
                    let mut s = 0.0;
                    for j in 0..=k {
                        s += v.get(i, j) * r.get(j, k);
                    }
                    vr.set(i, k, s);
                }
            }
            build(ReducedBasis::from_matrix(vr, basis.provenance().to_vec()).unwrap())
        };
        let a = rom_solve_trajectory(&ortho, &p, &mu).unwrap().lift(&ortho.basis).unwrap();
        let b = rom_solve_trajectory(&raw, &p, &mu).unwrap().lift(&raw.basis).unwrap();
        assert!(relative_error(a.matrix(), b.matrix()).unwrap() <= 1e-9);
    }

    #[test]
    fn cavity_full_snapshot_model_tracks_fom() {
        let p = CavityProblem::new(6, 6, TimeGrid::new(0.1, 1.0).unwrap()).unwrap();
        let mu = Parameter::scalar(40.0);
        let traj = p.solve_trajectory(&mu).unwrap();
        let model = ReducedModel::from_trajectory(&p, &traj, &mu).unwrap();
        let sol = rom_solve_trajectory(&model, &p, &mu).unwrap();
        let lifted = sol.lift(&model.basis).unwrap();
        let e = relative_error(traj.matrix(), lifted.matrix()).unwrap();
        assert!(e <= 1e-7, "relative error {e:e}");
    }
}
