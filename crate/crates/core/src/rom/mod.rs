//! Reduced-order machinery: basis, time partition, per-segment collocation,
//! the hyper-reduced online solver and the error indicators built on it.
//!
//! The online solve minimizes the full-order residual restricted to a
//! segment's collocation rows over the span of the reduced basis. Only the
//! stencil of those rows is ever lifted to the full grid, so the cost of a
//! step does not grow with the number of degrees of freedom.

mod format;
mod online;

use thiserror::Error;

use crate::fom::{FomError, FullOrderProblem, Parameter, ProblemSpec, SnapshotMatrix};
use crate::numerics::{norm2, orthonormalize_against, DenseMatrix, DenseVector, NumericsError};

pub use format::{read_model, read_model_prefix, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use online::{online_step, reduced_residual, rom_solve_trajectory, OnlineSolution, OnlineSolver, PicardPolicy};

/// A new snapshot whose component outside the current span is smaller than
/// this (relative to its own norm) is treated as linearly dependent.
pub const DEPENDENCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("cannot split {n_steps} time steps into {n_segments} segments")]
    InvalidPartition { n_steps: usize, n_segments: usize },
    #[error("time index {index} outside 1..={n_steps}")]
    TimeIndexOutOfRange { index: usize, n_steps: usize },
    #[error("no error value for time index {0}")]
    MissingTimeIndex(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("reference trajectory {0} has zero norm")]
    ZeroReference(usize),
    #[error("segment {segment} already holds grid index {index}")]
    DuplicatePoint { segment: usize, index: usize },
    #[error("segment {segment} has {points} collocation rows for {n} basis vectors")]
    UnderdeterminedSegment { segment: usize, points: usize, n: usize },
    #[error("reduced Picard iteration did not converge at time index {time_index} (last update {update:e})")]
    PicardNotConverged { time_index: usize, update: f64 },
    #[error("online solve failed at time index {time_index}: {source}")]
    AtTime {
        time_index: usize,
        #[source]
        source: Box<RomError>,
    },
    #[error("malformed reduced model: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Fom(#[from] FomError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Contiguous, near-uniform split of the time indices `1..=n_steps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimePartition {
    n_steps: usize,
    bounds: Vec<(usize, usize)>,
}

/// Splits `1..=n_steps` into `n_segments` contiguous ranges; the first
/// `n_steps % n_segments` ranges are one index longer.
pub fn partition_time(n_steps: usize, n_segments: usize) -> Result<TimePartition, RomError> {
    if n_segments == 0 || n_segments > n_steps {
        return Err(RomError::InvalidPartition { n_steps, n_segments });
    }
    let base = n_steps / n_segments;
    let extra = n_steps % n_segments;
    let mut bounds = Vec::with_capacity(n_segments);
    let mut start = 1;
    for j in 0..n_segments {
        let len = base + usize::from(j < extra);
        bounds.push((start, start + len - 1));
        start += len;
    }
    Ok(TimePartition { n_steps, bounds })
}

impl TimePartition {
    pub fn from_bounds(n_steps: usize, bounds: Vec<(usize, usize)>) -> Result<Self, RomError> {
        let mut expect = 1;
        for &(a, b) in &bounds {
            if a != expect || b < a {
                return Err(RomError::InvalidPartition {
                    n_steps,
                    n_segments: bounds.len(),
                });
            }
            expect = b + 1;
        }
        if (bounds.is_empty() && n_steps != 0) || expect != n_steps + 1 {
            return Err(RomError::InvalidPartition {
                n_steps,
                n_segments: bounds.len(),
            });
        }
        Ok(Self { n_steps, bounds })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_segments(&self) -> usize {
        self.bounds.len()
    }

    /// Inclusive `(first, last)` time indices of every segment.
    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn range(&self, segment: usize) -> std::ops::RangeInclusive<usize> {
        let (a, b) = self.bounds[segment];
        a..=b
    }

    /// The segment containing `time_index`.
    pub fn segment_of(&self, time_index: usize) -> Result<usize, RomError> {
        if time_index == 0 || time_index > self.n_steps {
            return Err(RomError::TimeIndexOutOfRange {
                index: time_index,
                n_steps: self.n_steps,
            });
        }
        Ok(self.bounds.partition_point(|&(_, b)| b < time_index))
    }
}

/// Free-function form of [`TimePartition::segment_of`].
pub fn segment_of(partition: &TimePartition, time_index: usize) -> Result<usize, RomError> {
    partition.segment_of(time_index)
}

/// Reduced basis `V`, stored with orthonormal columns.
///
/// `r_factor` is upper triangular with `raw_k = sum_i V_i r_factor[i, k]`,
/// so the original snapshots remain recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    v: DenseMatrix,
    provenance: Vec<(Parameter, usize)>,
    r_factor: DenseMatrix,
}

impl ReducedBasis {
    pub fn empty(n_dof: usize) -> Self {
        Self {
            v: DenseMatrix::zeros(n_dof, 0),
            provenance: Vec::new(),
            r_factor: DenseMatrix::zeros(0, 0),
        }
    }

    /// Uses the columns of `v` as given, without orthonormalizing them.
    pub fn from_matrix(v: DenseMatrix, provenance: Vec<(Parameter, usize)>) -> Result<Self, RomError> {
        if provenance.len() != v.cols() {
            return Err(RomError::DimensionMismatch(format!(
                "{} columns but {} provenance entries",
                v.cols(),
                provenance.len()
            )));
        }
        let n = v.cols();
        Ok(Self {
            v,
            provenance,
            r_factor: DenseMatrix::identity(n),
        })
    }

    pub(crate) fn from_parts(v: DenseMatrix, provenance: Vec<(Parameter, usize)>, r_factor: DenseMatrix) -> Self {
        Self { v, provenance, r_factor }
    }

    pub fn n(&self) -> usize {
        self.v.cols()
    }

    pub fn n_dof(&self) -> usize {
        self.v.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn column(&self, k: usize) -> &[f64] {
        self.v.column(k)
    }

    /// `(mu, time index)` of the snapshot behind each column.
    pub fn provenance(&self) -> &[(Parameter, usize)] {
        &self.provenance
    }

    pub fn r_factor(&self) -> &DenseMatrix {
        &self.r_factor
    }

    /// Orthonormalizes `snapshot` against the basis and appends it. Returns
    /// `false` (leaving the basis untouched) when it is numerically in the
    /// current span.
    pub fn push_snapshot(&mut self, snapshot: &[f64], mu: &Parameter, time_index: usize) -> Result<bool, RomError> {
        if snapshot.len() != self.n_dof() {
            return Err(RomError::DimensionMismatch(format!(
                "snapshot of length {} for a basis of length {}",
                snapshot.len(),
                self.n_dof()
            )));
        }
        let scale = norm2(snapshot);
        if !(scale > 0.0) || !scale.is_finite() {
            return Ok(false);
        }
        let mut q = snapshot.to_vec();
        let (coeffs, remainder) = orthonormalize_against(&self.v, &mut q);
        if !(remainder > DEPENDENCE_TOLERANCE * scale) {
            return Ok(false);
        }
        let n = self.n();
        let mut r = DenseMatrix::zeros(n + 1, n + 1);
        for j in 0..n {
            for i in 0..=j {
                r.set(i, j, self.r_factor.get(i, j));
            }
        }
        for (i, c) in coeffs.iter().enumerate() {
            r.set(i, n, *c);
        }
        r.set(n, n, remainder);
        self.v.push_column(&q)?;
        self.r_factor = r;
        self.provenance.push((mu.clone(), time_index));
        Ok(true)
    }

    /// The first `n` columns.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n());
        let mut v = self.v.clone();
        v.truncate_columns(n);
        let mut r = DenseMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                r.set(i, j, self.r_factor.get(i, j));
            }
        }
        Self {
            v,
            provenance: self.provenance[..n].to_vec(),
            r_factor: r,
        }
    }
}

/// `V c`.
pub fn lift(basis: &ReducedBasis, c: &[f64]) -> Result<DenseVector, RomError> {
    Ok(DenseVector::new(basis.matrix().matvec(c)?)?)
}

/// How a residual collocation point entered its segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    /// Selected by empirical interpolation of a residual.
    Eim,
    /// Added by adaptive enrichment.
    Enrichment,
    /// Part of an all-rows selector.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualPoint {
    pub index: usize,
    /// Basis size of the first model that uses the point.
    pub added_at: usize,
    pub origin: PointOrigin,
}

/// Collocation rows of one time segment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentCollocation {
    solution: Vec<usize>,
    residual: Vec<ResidualPoint>,
    selector: Vec<usize>,
}

impl SegmentCollocation {
    /// Solution points in selection order; point `k` (0-based) belongs to
    /// every model with more than `k` basis vectors.
    pub fn solution(&self) -> &[usize] {
        &self.solution
    }

    pub fn residual(&self) -> &[ResidualPoint] {
        &self.residual
    }

    /// Sorted union of solution and residual points.
    pub fn selector(&self) -> &[usize] {
        &self.selector
    }

    /// Residual points chosen by empirical interpolation, in order.
    pub fn eim_points(&self) -> Vec<usize> {
        self.residual
            .iter()
            .filter(|p| p.origin == PointOrigin::Eim)
            .map(|p| p.index)
            .collect()
    }

    pub fn enrichment_count(&self) -> usize {
        self.residual.iter().filter(|p| p.origin == PointOrigin::Enrichment).count()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selector.binary_search(&index).is_ok()
    }

    fn insert(&mut self, segment: usize, index: usize) -> Result<(), RomError> {
        match self.selector.binary_search(&index) {
            Ok(_) => Err(RomError::DuplicatePoint { segment, index }),
            Err(pos) => {
                self.selector.insert(pos, index);
                Ok(())
            }
        }
    }
}

/// Per-segment collocation sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollocationSet {
    segments: Vec<SegmentCollocation>,
}

impl CollocationSet {
    pub fn new(n_segments: usize) -> Self {
        Self {
            segments: vec![SegmentCollocation::default(); n_segments],
        }
    }

    /// Every grid row in every segment.
    pub fn full(n_segments: usize, n_dof: usize) -> Self {
        let seg = SegmentCollocation {
            solution: Vec::new(),
            residual: (0..n_dof)
                .map(|index| ResidualPoint {
                    index,
                    added_at: 0,
                    origin: PointOrigin::Full,
                })
                .collect(),
            selector: (0..n_dof).collect(),
        };
        Self {
            segments: vec![seg; n_segments],
        }
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, j: usize) -> &SegmentCollocation {
        &self.segments[j]
    }

    pub fn segments(&self) -> &[SegmentCollocation] {
        &self.segments
    }

    pub fn selector(&self, j: usize) -> &[usize] {
        &self.segments[j].selector
    }

    pub fn add_solution_point(&mut self, segment: usize, index: usize) -> Result<(), RomError> {
        let seg = &mut self.segments[segment];
        seg.insert(segment, index)?;
        seg.solution.push(index);
        Ok(())
    }

    pub fn add_residual_point(&mut self, segment: usize, point: ResidualPoint) -> Result<(), RomError> {
        let seg = &mut self.segments[segment];
        seg.insert(segment, point.index)?;
        seg.residual.push(point);
        Ok(())
    }

    /// Total number of enrichment points over all segments.
    pub fn enrichment_count(&self) -> usize {
        self.segments.iter().map(SegmentCollocation::enrichment_count).sum()
    }

    /// The sets as they stood for a model with `n` basis vectors.
    pub fn truncated(&self, n: usize) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let solution: Vec<usize> = s.solution.iter().copied().take(n).collect();
                let residual: Vec<ResidualPoint> = s.residual.iter().copied().filter(|p| p.added_at <= n).collect();
                let mut selector: Vec<usize> = solution.iter().copied().chain(residual.iter().map(|p| p.index)).collect();
                selector.sort_unstable();
                SegmentCollocation {
                    solution,
                    residual,
                    selector,
                }
            })
            .collect();
        Self { segments }
    }
}

/// A solution-point functional `v -> [v / dt - P(v, t; mu)](x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeimFunctionalRecord {
    pub segment: usize,
    pub index: usize,
    pub time_index: usize,
    pub mu: Parameter,
}

/// Everything the online stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub problem: ProblemSpec,
    pub basis: ReducedBasis,
    pub partition: TimePartition,
    pub collocation: CollocationSet,
    pub geim: Vec<GeimFunctionalRecord>,
    /// Per segment, the normalized residual vectors of the EIM points, one
    /// column per entry of [`SegmentCollocation::eim_points`].
    pub eim_bases: Vec<DenseMatrix>,
}

impl ReducedModel {
    /// A model with no collocation points yet.
    pub fn new(problem: ProblemSpec, basis: ReducedBasis, partition: TimePartition) -> Self {
        let n_seg = partition.n_segments();
        let n_dof = basis.n_dof();
        Self {
            problem,
            basis,
            partition,
            collocation: CollocationSet::new(n_seg),
            geim: Vec::new(),
            eim_bases: vec![DenseMatrix::zeros(n_dof, 0); n_seg],
        }
    }

    /// Collocates every grid row in every segment (no hyper-reduction).
    pub fn with_full_collocation(problem: ProblemSpec, basis: ReducedBasis, partition: TimePartition) -> Self {
        let mut model = Self::new(problem, basis, partition);
        model.collocation = CollocationSet::full(model.partition.n_segments(), model.basis.n_dof());
        model
    }

    /// All snapshots of one trajectory, orthonormalized (dependent columns
    /// dropped), with full collocation on a single segment.
    pub fn from_trajectory(
        problem: &dyn FullOrderProblem,
        trajectory: &SnapshotMatrix,
        mu: &Parameter,
    ) -> Result<Self, RomError> {
        let mut basis = ReducedBasis::empty(trajectory.n_dof());
        for t in 0..trajectory.n_times() {
            basis.push_snapshot(trajectory.state(t), mu, t)?;
        }
        let partition = partition_time(problem.time_grid().n_steps, 1)?;
        Ok(Self::with_full_collocation(problem.spec(), basis, partition))
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn n_dof(&self) -> usize {
        self.basis.n_dof()
    }

    pub fn build_problem(&self) -> Result<Box<dyn FullOrderProblem>, RomError> {
        Ok(self.problem.build()?)
    }

    /// Total collocation rows over all segments.
    pub fn collocation_count(&self) -> usize {
        self.collocation.segments().iter().map(|s| s.selector().len()).sum()
    }

    /// The sub-model with the first `n` basis vectors and the collocation
    /// points that existed at that size.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n());
        let collocation = self.collocation.truncated(n);
        let mut per_segment = vec![0usize; self.partition.n_segments()];
        let geim = self
            .geim
            .iter()
            .filter(|r| {
                per_segment[r.segment] += 1;
                per_segment[r.segment] <= n
            })
            .cloned()
            .collect();
        let eim_bases = self
            .eim_bases
            .iter()
            .zip(collocation.segments())
            .map(|(m, s)| {
                let mut m = m.clone();
                m.truncate_columns(s.eim_points().len());
                m
            })
            .collect();
        Self {
            problem: self.problem.clone(),
            basis: self.basis.truncated(n),
            partition: self.partition.clone(),
            collocation,
            geim,
            eim_bases,
        }
    }

    /// Checks that every segment can determine the reduced coefficients.
    pub fn check_solvable(&self) -> Result<(), RomError> {
        for (segment, s) in self.collocation.segments().iter().enumerate() {
            if s.selector().len() < self.n() || s.selector().is_empty() {
                return Err(RomError::UnderdeterminedSegment {
                    segment,
                    points: s.selector().len(),
                    n: self.n(),
                });
            }
        }
        Ok(())
    }
}

/// `max |r_k|`, the per-time indicator; `NaN` counts as infinite.
pub fn segment_error(residual: &[f64]) -> f64 {
    residual
        .iter()
        .fold(0.0f64, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r.abs()) })
}

/// Sum of the per-time errors over `1..=n_steps`, in total and per segment.
///
/// `per_time_errors` is indexed by time index; entry 0 is ignored.
pub fn error_indicator_total(per_time_errors: &[f64], partition: &TimePartition) -> Result<(f64, Vec<f64>), RomError> {
    if per_time_errors.len() <= partition.n_steps() {
        return Err(RomError::MissingTimeIndex(per_time_errors.len()));
    }
    let per_segment: Vec<f64> = partition
        .bounds()
        .iter()
        .map(|&(a, b)| per_time_errors[a..=b].iter().sum())
        .collect();
    Ok((per_segment.iter().sum(), per_segment))
}

/// Mean over trajectories of `||U - U_hat||_F / ||U||_F`.
pub fn relative_error_en(fom: &[SnapshotMatrix], rom: &[SnapshotMatrix]) -> Result<f64, RomError> {
    if fom.len() != rom.len() || fom.is_empty() {
        return Err(RomError::ShapeMismatch(format!(
            "{} reference and {} reduced trajectories",
            fom.len(),
            rom.len()
        )));
    }
    let mut total = 0.0;
    for (k, (u, w)) in fom.iter().zip(rom).enumerate() {
        total += relative_error(u.matrix(), w.matrix()).map_err(|e| match e {
            RomError::ZeroReference(_) => RomError::ZeroReference(k),
            e => e,
        })?;
    }
    Ok(total / fom.len() as f64)
}

/// `||U - W||_F / ||U||_F` for one pair.
pub fn relative_error(u: &DenseMatrix, w: &DenseMatrix) -> Result<f64, RomError> {
    if u.rows() != w.rows() || u.cols() != w.cols() {
        return Err(RomError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            u.rows(),
            u.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let reference = norm2(u.as_col_major());
    if reference == 0.0 {
        return Err(RomError::ZeroReference(0));
    }
    let diff: f64 = u
        .as_col_major()
        .iter()
        .zip(w.as_col_major())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(diff.sqrt() / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_examples() {
        assert_eq!(partition_time(100, 2).unwrap().bounds(), &[(1, 50), (51, 100)]);
        assert_eq!(partition_time(5, 1).unwrap().bounds(), &[(1, 5)]);
        assert_eq!(partition_time(10, 3).unwrap().bounds(), &[(1, 4), (5, 7), (8, 10)]);
        assert!(partition_time(3, 4).is_err());
        assert!(partition_time(3, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_covers_contiguously(n_steps in 1usize..400, k in 1usize..40) {
            prop_assume!(k <= n_steps);
            let p = partition_time(n_steps, k).unwrap();
            let mut next = 1;
            let lens: Vec<usize> = p.bounds().iter().map(|&(a, b)| b - a + 1).collect();
            for &(a, b) in p.bounds() {
                prop_assert_eq!(a, next);
                next = b + 1;
            }
            prop_assert_eq!(next, n_steps + 1);
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            prop_assert!(lens.windows(2).all(|w| w[0] >= w[1]));
            for t in 1..=n_steps {
                let scan = p.bounds().iter().position(|&(a, b)| a <= t && t <= b).unwrap();
                prop_assert_eq!(p.segment_of(t).unwrap(), scan);
            }
        }

        #[test]
        fn indicator_total_is_additive_under_refinement(errs in proptest::collection::vec(0.0f64..10.0, 60), k in 1usize..12) {
            let mut e = vec![0.0];
            e.extend(errs);
            let coarse = error_indicator_total(&e, &partition_time(60, 1).unwrap()).unwrap();
            let fine = error_indicator_total(&e, &partition_time(60, k).unwrap()).unwrap();
            prop_assert!((coarse.0 - fine.0).abs() <= 1e-12 * coarse.0.max(1.0));
            prop_assert!((fine.1.iter().sum::<f64>() - fine.0).abs() <= 1e-12 * fine.0.max(1.0));
        }
    }

    #[test]
    fn segment_of_boundaries() {
        let p = partition_time(100, 2).unwrap();
        assert_eq!(p.segment_of(50).unwrap(), 0);
        assert_eq!(p.segment_of(51).unwrap(), 1);
        assert!(p.segment_of(0).is_err());
        assert!(p.segment_of(101).is_err());
    }

    #[test]
    fn segment_error_examples() {
        assert_eq!(segment_error(&[1.0, -2.0, 0.5]), 2.0);
        assert_eq!(segment_error(&[0.0, 0.0]), 0.0);
        assert_eq!(segment_error(&[]), 0.0);
        assert_eq!(segment_error(&[1.0, f64::NAN]), f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..77).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut scan = 0.0f64;
        for x in &v {
            if x.abs() > scan {
                scan = x.abs();
            }
        }
        assert_eq!(segment_error(&v), scan);
    }

    #[test]
    fn indicator_examples() {
        let one = partition_time(3, 1).unwrap();
        assert_eq!(error_indicator_total(&[0.0, 1.0, 2.0, 3.0], &one).unwrap(), (6.0, vec![6.0]));
        let two = TimePartition::from_bounds(3, vec![(1, 1), (2, 3)]).unwrap();
        assert_eq!(error_indicator_total(&[0.0, 1.0, 2.0, 3.0], &two).unwrap(), (6.0, vec![1.0, 5.0]));
        assert!(matches!(
            error_indicator_total(&[0.0, 1.0], &two),
            Err(RomError::MissingTimeIndex(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e: Vec<f64> = (0..=100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p = partition_time(100, 7).unwrap();
        let (total, per) = error_indicator_total(&e, &p).unwrap();
        for (j, &(a, b)) in p.bounds().iter().enumerate() {
            let mut s = 0.0;
            for t in a..=b {
                s += e[t];
            }
            assert!((per[j] - s).abs() < 1e-12);
        }
        let mut all = 0.0;
        for x in &e[1..] {
            all += x;
        }
        assert!((total - all).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal_and_factor_recovers_snapshots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut basis = ReducedBasis::empty(30);
        let raws: Vec<Vec<f64>> = (0..6).map(|_| (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for (k, r) in raws.iter().enumerate() {
            assert!(basis.push_snapshot(r, &Parameter::scalar(1.0), k).unwrap());
        }
        // A combination of existing columns is rejected.
        let combo: Vec<f64> = (0..30).map(|i| raws[0][i] - 2.0 * raws[3][i]).collect();
        assert!(!basis.push_snapshot(&combo, &Parameter::scalar(1.0), 9).unwrap());
        assert_eq!(basis.n(), 6);
        for a in 0..6 {
            for b in 0..6 {
                let d = crate::numerics::dot(basis.column(a), basis.column(b));
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        for (k, raw) in raws.iter().enumerate() {
            for i in 0..30 {
                let mut s = 0.0;
                for j in 0..=k {
                    s += basis.matrix().get(i, j) * basis.r_factor().get(j, k);
                }
                assert!((s - raw[i]).abs() < 1e-12);
            }
        }
        assert_eq!(basis.truncated(2).r_factor().rows(), 2);
    }

    #[test]
    fn lift_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = DenseMatrix::from_col_major(10, 4, data).unwrap();
        let basis = ReducedBasis::from_matrix(v.clone(), vec![(Parameter::scalar(0.0), 0); 4]).unwrap();
        assert_eq!(lift(&basis, &[0.0, 1.0, 0.0, 0.0]).unwrap().as_slice(), v.column(1));
        assert!(lift(&basis, &[0.0; 4]).unwrap().iter().all(|&x| x == 0.0));
        let c = [0.3, -1.2, 2.0, 0.7];
        let out = lift(&basis, &c).unwrap();
        for i in 0..10 {
            let mut s = 0.0;
            for k in 0..4 {
                s += v.get(i, k) * c[k];
            }
            assert!((out[i] - s).abs() < 1e-14);
        }
        assert!(lift(&basis, &[1.0]).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let u = DenseMatrix::from_col_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let two_u = DenseMatrix::from_col_major(2, 2, vec![2.0, 4.0, 6.0, 8.0]).unwrap();
        let s = |m: &DenseMatrix| SnapshotMatrix::new(m.clone());
        assert_eq!(relative_error_en(&[s(&u)], &[s(&u)]).unwrap(), 0.0);
        assert!((relative_error_en(&[s(&u)], &[s(&two_u)]).unwrap() - 1.0).abs() < 1e-15);
        let zero = DenseMatrix::zeros(2, 2);
        assert!(matches!(relative_error_en(&[s(&zero)], &[s(&u)]), Err(RomError::ZeroReference(0))));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DenseMatrix::from_col_major(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = DenseMatrix::from_col_major(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..5 {
            for j in 0..3 {
                num += (a.get(i, j) - b.get(i, j)).powi(2);
                den += a.get(i, j).powi(2);
            }
        }
        let got = relative_error_en(&[s(&a)], &[s(&b)]).unwrap();
        assert!((got - (num / den).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn collocation_rejects_duplicates_and_truncates() {
        let mut c = CollocationSet::new(1);
        c.add_solution_point(0, 5).unwrap();
        c.add_solution_point(0, 2).unwrap();
        c.add_residual_point(
            0,
            ResidualPoint {
                index: 7,
                added_at: 2,
                origin: PointOrigin::Eim,
            },
        )
        .unwrap();
        c.add_residual_point(
            0,
            ResidualPoint {
                index: 1,
                added_at: 2,
                origin: PointOrigin::Enrichment,
            },
        )
        .unwrap();
        assert!(matches!(
            c.add_solution_point(0, 7),
            Err(RomError::DuplicatePoint { segment: 0, index: 7 })
        ));
        assert_eq!(c.selector(0), &[1, 2, 5, 7]);
        let t = c.truncated(1);
        assert_eq!(t.selector(0), &[5]);
        assert_eq!(c.segment(0).eim_points(), vec![7]);
        assert_eq!(c.enrichment_count(), 1);
    }
}
