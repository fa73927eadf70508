//! Offline stage: greedy parameter/time sampling, solution and residual
//! collocation points per segment, adaptive enrichment and adaptive time
//! partitioning.
//!
//! [`run_offline`] drives everything; the pieces it is built from are public
//! so they can be tested, and reused, on their own.

mod driver;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fom::{FomError, FullOrderProblem, Parameter, SnapshotMatrix};
use crate::numerics::{argmax_abs, NumericsError, QrFactorization, DenseMatrix, RANK_TOLERANCE};
use crate::rom::{GeimFunctionalRecord, ReducedModel, RomError};

pub use driver::{
    adaptive_enrich, run_offline, run_offline_with_observer, EnrichOutcome, GreedyHistory, IterationRecord,
    OfflineArtifact, OfflineEvent, Sweep, SweepEntry,
};

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("invalid greedy configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("full-order solve failed for mu = {mu}: {source}")]
    Fom {
        mu: Parameter,
        #[source]
        source: FomError,
    },
    #[error("GEIM functionals of segment {segment} are no longer unisolvent")]
    SingularGeimSystem { segment: usize },
    #[error("EIM system of segment {segment} is singular")]
    SingularEimSystem { segment: usize },
    #[error("residual of segment {segment} is already captured by its interpolation points")]
    DegenerateResidual { segment: usize },
    #[error("every time index has already been sampled for this parameter")]
    AllTimesSampled,
    #[error("no admissible snapshot could extend the basis at n = {n}")]
    BudgetExhausted { n: usize },
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl From<FomError> for GreedyError {
    fn from(e: FomError) -> Self {
        GreedyError::Rom(RomError::Fom(e))
    }
}

/// Which offline algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Adaptive enrichment with adaptive time partitioning.
    #[serde(rename = "AAROC")]
    Aaroc,
    /// Adaptive enrichment on a single time segment.
    #[serde(rename = "AROC")]
    Aroc,
    /// No enrichment: exactly `2n - 1` points per segment.
    #[serde(rename = "R2ROC")]
    R2roc,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Aaroc => "AAROC",
            Mode::Aroc => "AROC",
            Mode::R2roc => "R2ROC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyConfig {
    /// Robustness tolerance; `"inf"` disables enrichment.
    #[serde(serialize_with = "ser_gamma", deserialize_with = "de_gamma")]
    pub gamma: f64,
    /// First basis size at which the robustness indicator is active.
    pub n0: usize,
    pub p_adap: f64,
    pub n_add: usize,
    pub n_adap_incre: usize,
    pub n_adap_max: usize,
    pub n_max: usize,
    pub n_tpar_max: usize,
    #[serde(default)]
    pub eps_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Training-set index of the first parameter, overriding the seeded draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1_index: Option<usize>,
}

fn ser_gamma<S: Serializer>(g: &f64, s: S) -> Result<S::Ok, S::Error> {
    if g.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*g)
    }
}

fn de_gamma<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<(), GreedyError> {
        let bad = |m: &str| Err(GreedyError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0) {
            return bad("gamma > 0");
        }
        if self.n0 < 1 {
            return bad("n0 >= 1");
        }
        if !(self.p_adap > 0.0 && self.p_adap <= 1.0) {
            return bad("0 < p_adap <= 1");
        }
        if self.n_add < 1 {
            return bad("n_add >= 1");
        }
        if self.n_max < 1 {
            return bad("n_max >= 1");
        }
        if self.n_tpar_max < 1 {
            return bad("n_tpar_max >= 1");
        }
        if !(self.eps_tol >= 0.0) {
            return bad("eps_tol >= 0");
        }
        Ok(())
    }
}

/// Time index of the widest snapshot (`max u - min u`) and that snapshot.
pub fn select_initial_pair(snapshots: &SnapshotMatrix) -> (usize, Vec<f64>) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for t in 0..snapshots.n_times() {
        let col = snapshots.state(t);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = hi - lo;
        if spread > best.1 {
            best = (t, spread);
        }
    }
    (best.0, snapshots.state(best.0).to_vec())
}

/// Index of the largest indicator value (smallest index on ties) and the
/// value itself.
pub fn greedy_parameter(indicator_values: &[f64]) -> Result<(usize, f64), GreedyError> {
    let i = argmax_abs(indicator_values, &[]).map_err(|_| GreedyError::EmptyTrainingSet)?;
    Ok((i, indicator_values[i]))
}

/// Time index in `1..` with the largest error, skipping `already_sampled`.
///
/// `per_time_errors` is indexed by time; entry 0 (the initial condition) is
/// never selected.
pub fn greedy_time(per_time_errors: &[f64], already_sampled: &[usize]) -> Result<usize, GreedyError> {
    let mut excluded = already_sampled.to_vec();
    excluded.push(0);
    argmax_abs(per_time_errors, &excluded).map_err(|_| GreedyError::AllTimesSampled)
}

/// `Delta_n / Delta_{n-1}` once `n >= n0`, else 0.
///
/// Without a previous value (the first iteration) the indicator is 0; a zero
/// previous value with a positive current one gives `+inf`.
pub fn robustness_indicator(delta_n: f64, delta_prev: Option<f64>, n: usize, n0: usize) -> f64 {
    if n < n0 {
        return 0.0;
    }
    let Some(prev) = delta_prev else {
        return 0.0;
    };
    if delta_n.is_nan() || delta_n.is_infinite() {
        return f64::INFINITY;
    }
    if prev == 0.0 {
        return if delta_n > 0.0 { f64::INFINITY } else { 0.0 };
    }
    if prev.is_infinite() {
        return 0.0;
    }
    delta_n / prev
}

/// Grid indices sampled uniformly in rank from the top `p_adap` fraction of
/// `|residual|`.
///
/// Indices are ranked ascending by `(|r|, index)`. Quantile `q` maps to rank
/// `max(1, ceil(q N))`; an index that is excluded or already chosen is
/// replaced by the nearest unused higher rank (lower if none is left above).
pub fn inverse_cdf_points(
    residual: &[f64],
    p_adap: f64,
    n_adap: usize,
    excluded: &[usize],
) -> Result<Vec<usize>, GreedyError> {
    let n = residual.len();
    let key = |i: usize| {
        let r = residual[i];
        if r.is_nan() {
            f64::INFINITY
        } else {
            r.abs()
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut used = vec![false; n];
    for &e in excluded {
        if e < n {
            used[e] = true;
        }
    }
    if !used.iter().any(|u| !u) || n_adap == 0 {
        return Err(GreedyError::Numerics(NumericsError::EmptyCandidateSet));
    }
    let mut picks = Vec::with_capacity(n_adap);
    for k in 0..n_adap {
        let q = if n_adap == 1 {
            1.0
        } else {
            1.0 - p_adap + k as f64 * p_adap / (n_adap - 1) as f64
        };
        // The guard keeps exact-decimal quantiles (0.8 * 10) on their rank.
        let rank = ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
        let pos = rank - 1;
        let found = (pos..n).find(|&p| !used[order[p]]).or_else(|| (0..pos).rev().find(|&p| !used[order[p]]));
        match found {
            Some(p) => {
                used[order[p]] = true;
                picks.push(order[p]);
            }
            None => break,
        }
    }
    Ok(picks)
}

/// Outcome of [`geim_add_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeimOutcome {
    pub index: usize,
    pub record: GeimFunctionalRecord,
    /// `max_i |sigma_i(xi_tilde)|` over the existing functionals, relative to
    /// the largest functional value involved.
    pub constraint_residual: f64,
}

/// Adds the solution point for the newest basis column to segment `segment`.
///
/// Existing functionals of the segment pair with the first basis columns in
/// order. The new column is interpolated by them, and the point where the
/// interpolation error of the new pair's functional is largest (outside the
/// segment's current rows) becomes the next point. Functionals of nonlinear
/// operators are applied column by column and combined linearly.
pub fn geim_add_point(
    model: &mut ReducedModel,
    problem: &dyn FullOrderProblem,
    segment: usize,
    time_index: usize,
    mu: &Parameter,
) -> Result<GeimOutcome, GreedyError> {
    let n_new = model.n();
    let records: Vec<GeimFunctionalRecord> = model.geim.iter().filter(|r| r.segment == segment).cloned().collect();
    let k = records.len();
    if n_new != k + 1 {
        return Err(GreedyError::InvalidConfig(format!(
            "segment {segment} has {k} functionals for {n_new} basis vectors"
        )));
    }
    let grid = problem.time_grid();
    let basis = &model.basis;
    // sigma_i(xi_l) for the existing functionals, l = 0..=k.
    let mut m = DenseMatrix::zeros(k.max(1), k);
    let mut rhs = vec![0.0; k];
    let mut scale = 0.0f64;
    for (i, rec) in records.iter().enumerate() {
        let t = grid.time(rec.time_index);
        for l in 0..=k {
            let v = problem.functional_rows(basis.column(l), t, &rec.mu, &[rec.index])?[0];
            scale = scale.max(v.abs());
            if l < k {
                m.set(i, l, v);
            } else {
                rhs[i] = v;
            }
        }
    }
    let alpha = if k == 0 {
        Vec::new()
    } else {
        let qr = QrFactorization::new(&m).map_err(|_| GreedyError::SingularGeimSystem { segment })?;
        let diag = qr.r_diagonal();
        let largest = diag.iter().fold(0.0f64, |a, &b| a.max(b));
        if diag.iter().any(|&d| !(d > RANK_TOLERANCE * largest)) {
            return Err(GreedyError::SingularGeimSystem { segment });
        }
        qr.solve(&rhs)
    };
    let mut constraint = 0.0f64;
    for i in 0..k {
        let mut s = rhs[i];
        for l in 0..k {
            s -= m.get(i, l) * alpha[l];
        }
        constraint = constraint.max(s.abs());
    }
    let constraint_residual = if scale > 0.0 { constraint / scale } else { constraint };
    let t = grid.time(time_index);
    let all: Vec<usize> = (0..model.n_dof()).collect();
    let mut values = problem.functional_rows(basis.column(k), t, mu, &all)?;
    for (l, a) in alpha.iter().enumerate() {
        let col = problem.functional_rows(basis.column(l), t, mu, &all)?;
        for (v, c) in values.iter_mut().zip(&col) {
            *v -= a * c;
        }
    }
    let index = argmax_abs(&values, model.collocation.selector(segment))?;
    model.collocation.add_solution_point(segment, index)?;
    let record = GeimFunctionalRecord {
        segment,
        index,
        time_index,
        mu: mu.clone(),
    };
    model.geim.push(record.clone());
    Ok(GeimOutcome {
        index,
        record,
        constraint_residual,
    })
}

/// Outcome of [`eim_add_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct EimOutcome {
    pub index: usize,
    /// `max |r_tilde|` at the previous EIM points, relative to `max |r|`.
    pub constraint_residual: f64,
}

/// Adds a residual point to `segment` from the full residual `residual`.
///
/// The residual is interpolated at the segment's earlier EIM points by the
/// stored residual vectors; the largest entry of the remainder outside the
/// segment's rows becomes the new point, and the remainder, scaled to 1
/// there, joins the stored vectors. `basis_size` is the size of the model
/// that will first use the point.
pub fn eim_add_point(
    model: &mut ReducedModel,
    segment: usize,
    residual: &[f64],
    basis_size: usize,
) -> Result<EimOutcome, GreedyError> {
    let points = model.collocation.segment(segment).eim_points();
    let q = &model.eim_bases[segment];
    let k = points.len();
    // Lower-triangular interpolation system, solved by forward substitution.
    let mut alpha = vec![0.0; k];
    for i in 0..k {
        let mut s = residual[points[i]];
        for l in 0..i {
            s -= q.get(points[i], l) * alpha[l];
        }
        let d = q.get(points[i], i);
        if !(d.abs() > RANK_TOLERANCE) {
            return Err(GreedyError::SingularEimSystem { segment });
        }
        alpha[i] = s / d;
    }
    let mut r_tilde = residual.to_vec();
    for (l, a) in alpha.iter().enumerate() {
        for (r, v) in r_tilde.iter_mut().zip(q.column(l)) {
            *r -= a * v;
        }
    }
    let scale = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let at_points = points.iter().fold(0.0f64, |m, &p| m.max(r_tilde[p].abs()));
    let constraint_residual = if scale > 0.0 { at_points / scale } else { at_points };
    let index = argmax_abs(&r_tilde, model.collocation.selector(segment))?;
    let pivot = r_tilde[index];
    if !(pivot.abs() > 1e-14) {
        return Err(GreedyError::DegenerateResidual { segment });
    }
    for r in &mut r_tilde {
        *r /= pivot;
    }
    r_tilde[index] = 1.0;
    model.eim_bases[segment].push_column(&r_tilde)?;
    model.collocation.add_residual_point(
        segment,
        crate::rom::ResidualPoint {
            index,
            added_at: basis_size,
            origin: crate::rom::PointOrigin::Eim,
        },
    )?;
    Ok(EimOutcome {
        index,
        constraint_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;
    use crate::rom::{partition_time, ReducedBasis};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initial_pair_examples() {
        let grow = DenseMatrix::from_col_major(2, 3, vec![0.0, 1.0, 0.0, 2.0, -1.0, 2.0]).unwrap();
        assert_eq!(select_initial_pair(&SnapshotMatrix::new(grow)).0, 2);
        let flat = DenseMatrix::from_col_major(2, 3, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(select_initial_pair(&SnapshotMatrix::new(flat)).0, 0);
        let one = DenseMatrix::from_col_major(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(select_initial_pair(&SnapshotMatrix::new(one)), (0, vec![3.0, 4.0]));
    }

    #[test]
    fn greedy_parameter_examples() {
        assert_eq!(greedy_parameter(&[1.0, 3.0, 2.0]).unwrap(), (1, 3.0));
        assert_eq!(greedy_parameter(&[2.0, 2.0]).unwrap().0, 0);
        assert!(greedy_parameter(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut best = 0;
        for i in 1..v.len() {
            if v[i] > v[best] {
                best = i;
            }
        }
        assert_eq!(greedy_parameter(&v).unwrap().0, best);
    }

    #[test]
    fn greedy_time_examples() {
        let e = [0.0, 5.0, 1.0, 9.0];
        assert_eq!(greedy_time(&e, &[]).unwrap(), 3);
        assert_eq!(greedy_time(&e, &[3]).unwrap(), 1);
        assert!(matches!(greedy_time(&e, &[1, 2, 3]), Err(GreedyError::AllTimesSampled)));
        // Time 0 never wins, even when largest.
        assert_eq!(greedy_time(&[10.0, 1.0, 2.0], &[]).unwrap(), 2);
    }

    #[test]
    fn robustness_examples() {
        assert_eq!(robustness_indicator(7.0, Some(1.0), 3, 4), 0.0);
        assert_eq!(robustness_indicator(5.0, Some(10.0), 5, 4), 0.5);
        assert_eq!(robustness_indicator(1.0, Some(0.0), 5, 4), f64::INFINITY);
        assert_eq!(robustness_indicator(1.0, None, 1, 1), 0.0);
    }

    #[test]
    fn inverse_cdf_examples() {
        let r: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let mut got = inverse_cdf_points(&r, 0.2, 2, &[]).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![7, 9]);
        assert_eq!(inverse_cdf_points(&r, 0.2, 1, &[]).unwrap(), vec![9]);
        let five = [0.5, -0.1, 0.3, 0.9, -0.7];
        // Ascending |r|: 1, 2, 0, 4, 3; ranks 1, 3, 5.
        assert_eq!(inverse_cdf_points(&five, 1.0, 3, &[]).unwrap(), vec![1, 0, 3]);
        // An excluded pick moves to the next rank up.
        assert_eq!(inverse_cdf_points(&r, 0.2, 1, &[9]).unwrap(), vec![8]);
        assert!(inverse_cdf_points(&[1.0], 0.2, 1, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_cdf_points_are_distinct_and_admissible(
            r in proptest::collection::vec(-10.0f64..10.0, 1..60),
            p in 0.05f64..1.0,
            n_adap in 1usize..15,
            excl in proptest::collection::vec(0usize..60, 0..10),
        ) {
            if let Ok(picks) = inverse_cdf_points(&r, p, n_adap, &excl) {
                let mut s = picks.clone();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), picks.len());
                prop_assert!(picks.iter().all(|i| !excl.contains(i) && *i < r.len()));
                let free = (0..r.len()).filter(|i| !excl.contains(i)).count();
                prop_assert_eq!(picks.len(), n_adap.min(free));
            }
        }
    }

    fn model_with(basis_cols: &[Vec<f64>], n_seg: usize, n_steps: usize) -> ReducedModel {
        let n_dof = basis_cols[0].len();
        let mut b = ReducedBasis::empty(n_dof);
        for (k, c) in basis_cols.iter().enumerate() {
            assert!(b.push_snapshot(c, &Parameter::scalar(0.01), k).unwrap());
        }
        let spec = crate::fom::ProblemSpec::Burgers {
            n_cells: n_dof - 1,
            dt: 1e-3,
            t_final: n_steps as f64 * 1e-3,
        };
        ReducedModel::new(spec, b, partition_time(n_steps, n_seg).unwrap())
    }

    #[test]
    fn eim_points_are_interpolatory_and_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cols: Vec<Vec<f64>> = (0..1).map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut model = model_with(&cols, 1, 10);
        for n in 1..8 {
            let r: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = eim_add_point(&mut model, 0, &r, n + 1).unwrap();
            assert!(out.constraint_residual <= 1e-12);
        }
        let pts = model.collocation.segment(0).eim_points();
        let q = &model.eim_bases[0];
        for (k, &pk) in pts.iter().enumerate() {
            assert_eq!(q.get(pk, k), 1.0);
            for &pi in &pts[..k] {
                assert!(q.get(pi, k).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn eim_first_point_is_plain_argmax_and_degenerate_is_reported() {
        let cols = vec![vec![1.0, 0.0, 0.0, 0.0]];
        let mut model = model_with(&cols, 1, 4);
        let out = eim_add_point(&mut model, 0, &[0.1, -3.0, 2.0, 0.5], 1).unwrap();
        assert_eq!(out.index, 1);
        // A multiple of the stored vector leaves nothing new.
        let err = eim_add_point(&mut model, 0, &[0.0, 0.0, 0.0, 0.0], 2).unwrap_err();
        assert!(matches!(err, GreedyError::DegenerateResidual { segment: 0 }));
    }

    #[test]
    fn geim_first_point_and_exclusion() {
        use crate::fom::{BurgersProblem, TimeGrid};
        let p = BurgersProblem::new(20, TimeGrid::new(1e-3, 0.01).unwrap()).unwrap();
        let mu = Parameter::scalar(0.02);
        let traj = p.solve_trajectory(&mu).unwrap();
        let xi = traj.state(3).to_vec();
        let mut model = model_with(&[xi.clone()], 1, 10);
        let out = geim_add_point(&mut model, &p, 0, 3, &mu).unwrap();
        let all: Vec<usize> = (0..21).collect();
        let sig = p.functional_rows(model.basis.column(0), p.time_grid().time(3), &mu, &all).unwrap();
        assert_eq!(out.index, argmax_abs(&sig, &[]).unwrap());
        // With that point already taken, the runner-up is chosen.
        let mut again = model_with(&[xi], 1, 10);
        again.collocation.add_residual_point(
            0,
            crate::rom::ResidualPoint { index: out.index, added_at: 0, origin: crate::rom::PointOrigin::Enrichment },
        ).unwrap();
        let second = geim_add_point(&mut again, &p, 0, 3, &mu).unwrap();
        assert_eq!(second.index, argmax_abs(&sig, &[out.index]).unwrap());
    }

    #[test]
    fn geim_constraints_vanish() {
        use crate::fom::{BurgersProblem, TimeGrid};
        let p = BurgersProblem::new(30, TimeGrid::new(1e-3, 0.05).unwrap()).unwrap();
        let mus = [0.01, 0.03, 0.06, 0.09];
        let mut cols = Vec::new();
        for (k, m) in mus.iter().enumerate() {
            cols.push(p.solve_trajectory(&Parameter::scalar(*m)).unwrap().state(10 * (k + 1)).to_vec());
        }
        let mut model = model_with(&cols[..1], 1, 50);
        geim_add_point(&mut model, &p, 0, 10, &Parameter::scalar(mus[0])).unwrap();
        for k in 1..cols.len() {
            model.basis.push_snapshot(&cols[k], &Parameter::scalar(mus[k]), 10 * (k + 1)).unwrap();
            let out = geim_add_point(&mut model, &p, 0, 10 * (k + 1), &Parameter::scalar(mus[k])).unwrap();
            assert!(out.constraint_residual <= 1e-10, "{}", out.constraint_residual);
        }
        assert_eq!(model.collocation.segment(0).solution().len(), 4);
    }

    #[test]
    fn config_parses_gamma_forms() {
        let base = r#"{"gamma": GAMMA, "n0": 4, "p_adap": 0.2, "n_add": 11, "n_adap_incre": 5,
            "n_adap_max": 40, "n_max": 40, "n_tpar_max": 8}"#;
        let c: GreedyConfig = serde_json::from_str(&base.replace("GAMMA", "80")).unwrap();
        assert_eq!(c.gamma, 80.0);
        assert_eq!(c.seed, 0);
        let c: GreedyConfig = serde_json::from_str(&base.replace("GAMMA", "\"inf\"")).unwrap();
        assert!(c.gamma.is_infinite());
        let back: GreedyConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<GreedyConfig>(&base.replace("GAMMA", "\"big\"")).is_err());
        let mut bad = c.clone();
        bad.p_adap = 0.0;
        assert!(bad.validate().is_err());
    }
}
