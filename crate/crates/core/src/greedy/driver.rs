use std::collections::HashMap;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    eim_add_point, geim_add_point, greedy_parameter, greedy_time, inverse_cdf_points, robustness_indicator,
    select_initial_pair, GreedyConfig, GreedyError, Mode,
};
use crate::fom::{FullOrderProblem, Parameter, SnapshotMatrix};
use crate::rom::{
    error_indicator_total, partition_time, OnlineSolver, PicardPolicy, PointOrigin, ReducedBasis, ReducedModel,
    ResidualPoint,
};

/// Trajectories kept in memory at most; beyond this they are recomputed.
const FOM_CACHE_BYTES: usize = 1 << 30;

/// Online indicators for one training parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    /// Indexed by time, entry 0 is 0.
    pub errors: Vec<f64>,
    pub total: f64,
    pub per_segment: Vec<f64>,
    pub unconverged_steps: usize,
    pub diverged_at: Option<usize>,
}

/// Indicators over the whole training set, in training-set order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub entries: Vec<SweepEntry>,
    /// `max` of the totals.
    pub delta: f64,
    pub argmax: usize,
}

impl Sweep {
    pub fn compute(
        model: &ReducedModel,
        problem: &dyn FullOrderProblem,
        training: &[Parameter],
    ) -> Result<Sweep, GreedyError> {
        let solver = OnlineSolver::new(model, problem)?;
        let entries = training
            .par_iter()
            .map(|mu| {
                let d = solver.indicators(mu, PicardPolicy::Lenient)?;
                let (total, per_segment) = error_indicator_total(&d.errors, &model.partition)?;
                Ok(SweepEntry {
                    errors: d.errors,
                    total,
                    per_segment,
                    unconverged_steps: d.unconverged_steps,
                    diverged_at: d.diverged_at,
                })
            })
            .collect::<Result<Vec<_>, GreedyError>>()?;
        let totals: Vec<f64> = entries.iter().map(|e| e.total).collect();
        let (argmax, delta) = greedy_parameter(&totals)?;
        Ok(Sweep { entries, delta, argmax })
    }

    /// The worst `(parameter, time)` pair of `segment` among finite
    /// indicators, ties going to the smallest indices.
    ///
    /// An identically zero indicator yields no pair, unless the segment
    /// system is square: there the indicator vanishes by construction and
    /// the tie rule decides.
    pub fn segment_pair(&self, model: &ReducedModel, segment: usize) -> Option<(usize, usize)> {
        let square = model.collocation.selector(segment).len() == model.n();
        let mut best: Option<(usize, f64)> = None;
        for (m, e) in self.entries.iter().enumerate() {
            let v = e.per_segment[segment];
            if v.is_finite() && (square || v > 0.0) && best.is_none_or(|(_, b)| v > b) {
                best = Some((m, v));
            }
        }
        let (m, _) = best?;
        let errors = &self.entries[m].errors;
        let mut t_best = None;
        for t in model.partition.range(segment) {
            if errors[t].is_finite() && t_best.is_none_or(|b: usize| errors[t] > errors[b]) {
                t_best = Some(t);
            }
        }
        t_best.map(|t| (m, t))
    }
}

/// One greedy iteration at basis size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Number of time segments of the epoch.
    pub epoch: usize,
    pub n: usize,
    pub delta_initial: f64,
    pub rho_initial: f64,
    /// After enrichment.
    pub delta: f64,
    pub rho: f64,
    pub accepted: bool,
    pub enrichment_passes: usize,
    /// Enrichment points added in this iteration, per segment.
    pub enrichment_added: Vec<usize>,
    /// Collocation rows over all segments at size `n`, after enrichment.
    pub collocation_total: usize,
    pub unconverged_steps: usize,
    pub diverged: usize,
    /// Training index, parameter and time of the snapshot that extended the
    /// basis, when it was extended.
    pub next: Option<(usize, Parameter, usize)>,
    pub eim_skipped: usize,
    /// Largest relative interpolation residual at existing constraint points.
    pub geim_constraint: f64,
    pub eim_constraint: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GreedyHistory {
    pub iterations: Vec<IterationRecord>,
    /// `(segments, n)` of every abandoned epoch.
    pub restarts: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineArtifact {
    pub model: ReducedModel,
    pub history: GreedyHistory,
    pub mode: Mode,
    pub n_tpar: usize,
    /// Largest number of enrichment points in any segment.
    pub n_adap: usize,
    pub n_adap_total: usize,
    /// Set when robustness was still violated at the largest partition.
    pub truncated: bool,
    pub fom_solves: usize,
    /// `(parameter, time)` pairs behind the basis of the final epoch.
    pub sampled: Vec<(Parameter, usize)>,
}

/// Progress notifications from [`run_offline_with_observer`].
#[derive(Debug)]
pub enum OfflineEvent<'a> {
    /// An iteration finished; `model` already holds the basis vector and
    /// points it added, if any.
    Iteration {
        record: &'a IterationRecord,
        model: &'a ReducedModel,
    },
    /// The epoch with `segments` segments was abandoned at size `n`.
    Restart { segments: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichOutcome {
    /// `rho <= gamma` on exit.
    pub accepted: bool,
    pub rho: f64,
    pub passes: usize,
    /// Points added per segment.
    pub added: Vec<usize>,
    pub sweep: Sweep,
}

/// Adds enrichment points until the robustness indicator is at most `gamma`
/// or the batch size exceeds `n_adap_max`.
///
/// `residuals[j]` is the full residual that seeds segment `j` (empty to skip
/// the segment); `resweep` recomputes the indicators after each batch.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_enrich<F>(
    model: &mut ReducedModel,
    config: &GreedyConfig,
    n: usize,
    delta_prev: Option<f64>,
    sweep: Sweep,
    residuals: &[Vec<f64>],
    mut resweep: F,
) -> Result<EnrichOutcome, GreedyError>
where
    F: FnMut(&ReducedModel) -> Result<Sweep, GreedyError>,
{
    let mut sweep = sweep;
    let mut rho = robustness_indicator(sweep.delta, delta_prev, n, config.n0);
    let mut n_adap = config.n_add;
    let mut passes = 0;
    let mut added = vec![0usize; residuals.len()];
    while rho > config.gamma && n_adap <= config.n_adap_max {
        let mut batch = 0;
        for (j, r) in residuals.iter().enumerate() {
            if r.is_empty() {
                continue;
            }
            let picks = match inverse_cdf_points(r, config.p_adap, n_adap, model.collocation.selector(j)) {
                Ok(p) => p,
                Err(_) => continue,
            };
            for index in picks {
                model.collocation.add_residual_point(
                    j,
                    ResidualPoint {
                        index,
                        added_at: n,
                        origin: PointOrigin::Enrichment,
                    },
                )?;
                added[j] += 1;
                batch += 1;
            }
        }
        if batch == 0 {
            break;
        }
        passes += 1;
        sweep = resweep(model)?;
        rho = robustness_indicator(sweep.delta, delta_prev, n, config.n0);
        debug!("enrichment pass {passes}: +{batch} points, delta = {:.6e}, rho = {rho:.4}", sweep.delta);
        n_adap += config.n_adap_incre;
        if config.n_adap_incre == 0 {
            break;
        }
    }
    Ok(EnrichOutcome {
        accepted: rho <= config.gamma,
        rho,
        passes,
        added,
        sweep,
    })
}

struct FomCache<'a> {
    problem: &'a dyn FullOrderProblem,
    stored: HashMap<Vec<u64>, SnapshotMatrix>,
    bytes: usize,
    solves: usize,
}

impl<'a> FomCache<'a> {
    fn with<R>(&mut self, mu: &Parameter, f: impl FnOnce(&SnapshotMatrix) -> R) -> Result<R, GreedyError> {
        let key = mu.key();
        if let Some(s) = self.stored.get(&key) {
            return Ok(f(s));
        }
        let traj = self
            .problem
            .solve_trajectory(mu)
            .map_err(|source| GreedyError::Fom { mu: mu.clone(), source })?;
        self.solves += 1;
        let out = f(&traj);
        let size = traj.n_dof() * traj.n_times() * 8;
        if self.bytes + size <= FOM_CACHE_BYTES {
            self.bytes += size;
            self.stored.insert(key, traj);
        }
        Ok(out)
    }
}

enum EpochEnd {
    Restart,
    Done { model: ReducedModel, truncated: bool, sampled: Vec<(Parameter, usize)> },
}

struct Driver<'a> {
    config: &'a GreedyConfig,
    problem: &'a dyn FullOrderProblem,
    training: &'a [Parameter],
    enrichment: bool,
    cache: FomCache<'a>,
    history: GreedyHistory,
}

pub fn run_offline(
    config: &GreedyConfig,
    problem: &dyn FullOrderProblem,
    training: &[Parameter],
    mode: Mode,
) -> Result<OfflineArtifact, GreedyError> {
    run_offline_with_observer(config, problem, training, mode, &mut |_| {})
}

/// Runs the offline stage, reporting every iteration to `observer`.
pub fn run_offline_with_observer(
    config: &GreedyConfig,
    problem: &dyn FullOrderProblem,
    training: &[Parameter],
    mode: Mode,
    observer: &mut dyn FnMut(OfflineEvent<'_>),
) -> Result<OfflineArtifact, GreedyError> {
    config.validate()?;
    if training.is_empty() {
        return Err(GreedyError::EmptyTrainingSet);
    }
    let mu1 = match config.mu1_index {
        Some(i) if i < training.len() => i,
        Some(i) => {
            return Err(GreedyError::InvalidConfig(format!(
                "mu1_index {i} outside a training set of {}",
                training.len()
            )))
        }
        None => ChaCha8Rng::seed_from_u64(config.seed).gen_range(0..training.len()),
    };
    let n_tpar_max = match mode {
        Mode::Aaroc => config.n_tpar_max,
        Mode::Aroc | Mode::R2roc => 1,
    };
    let mut driver = Driver {
        config,
        problem,
        training,
        enrichment: mode != Mode::R2roc,
        cache: FomCache {
            problem,
            stored: HashMap::new(),
            bytes: 0,
            solves: 0,
        },
        history: GreedyHistory::default(),
    };
    let mut n_tpar = 1;
    loop {
        if n_tpar > problem.time_grid().n_steps {
            return Err(GreedyError::InvalidConfig(format!(
                "cannot split {} steps into {n_tpar} segments",
                problem.time_grid().n_steps
            )));
        }
        match driver.epoch(n_tpar, n_tpar < n_tpar_max, mu1, observer)? {
            EpochEnd::Restart => {
                info!("robustness not reached with {n_tpar} segment(s); restarting with {}", n_tpar + 1);
                n_tpar += 1;
            }
            EpochEnd::Done {
                model,
                truncated,
                sampled,
            } => {
                let per_segment: Vec<usize> = model.collocation.segments().iter().map(|s| s.enrichment_count()).collect();
                return Ok(OfflineArtifact {
                    n_adap: per_segment.iter().copied().max().unwrap_or(0),
                    n_adap_total: per_segment.iter().sum(),
                    model,
                    history: driver.history,
                    mode,
                    n_tpar,
                    truncated,
                    fom_solves: driver.cache.solves,
                    sampled,
                });
            }
        }
    }
}

impl<'a> Driver<'a> {
    fn sweep(&self, model: &ReducedModel) -> Result<Sweep, GreedyError> {
        Sweep::compute(model, self.problem, self.training)
    }

    /// Full residual of the current model at `(training[m], t)`.
    fn full_residual(&self, model: &ReducedModel, m: usize, t: usize) -> Result<Vec<f64>, GreedyError> {
        let mu = &self.training[m];
        let solver = OnlineSolver::new(model, self.problem)?;
        let sol = solver.solve_until(mu, PicardPolicy::Lenient, t)?;
        let states = sol.lift(&model.basis)?;
        let time = self.problem.time_grid().time(t);
        Ok(self.problem.residual(states.state(t), states.state(t - 1), time, mu)?)
    }

    fn epoch(
        &mut self,
        n_tpar: usize,
        may_restart: bool,
        mu1: usize,
        observer: &mut dyn FnMut(OfflineEvent<'_>),
    ) -> Result<EpochEnd, GreedyError> {
        let config = self.config;
        let problem = self.problem;
        let partition = partition_time(problem.time_grid().n_steps, n_tpar)?;
        let n_seg = partition.n_segments();
        let mu = self.training[mu1].clone();
        let (t1, xi1) = self.cache.with(&mu, select_initial_pair)?;
        let mut basis = ReducedBasis::empty(problem.n_dof());
        if !basis.push_snapshot(&xi1, &mu, t1)? {
            return Err(GreedyError::BudgetExhausted { n: 0 });
        }
        let mut model = ReducedModel::new(problem.spec(), basis, partition);
        for j in 0..n_seg {
            geim_add_point(&mut model, problem, j, t1, &mu)?;
        }
        let mut sampled = vec![(mu1, t1)];
        let mut cached: Vec<Vec<f64>> = vec![Vec::new(); n_seg];
        let mut delta_prev = None;
        let mut truncated = false;
        let mut n = 1;
        loop {
            let mut sweep = self.sweep(&model)?;
            let delta_initial = sweep.delta;
            let rho_initial = robustness_indicator(delta_initial, delta_prev, n, config.n0);
            let mut rec = IterationRecord {
                epoch: n_tpar,
                n,
                delta_initial,
                rho_initial,
                delta: delta_initial,
                rho: rho_initial,
                accepted: rho_initial <= config.gamma,
                enrichment_passes: 0,
                enrichment_added: vec![0; n_seg],
                collocation_total: 0,
                unconverged_steps: 0,
                diverged: 0,
                next: None,
                eim_skipped: 0,
                geim_constraint: 0.0,
                eim_constraint: 0.0,
            };
            if self.enrichment && !rec.accepted {
                for j in 0..n_seg {
                    if cached[j].is_empty() {
                        if let Some((m, t)) = sweep.segment_pair(&model, j) {
                            cached[j] = self.full_residual(&model, m, t)?;
                        }
                    }
                }
                let out = adaptive_enrich(&mut model, config, n, delta_prev, sweep, &cached, |m| self.sweep(m))?;
                sweep = out.sweep;
                rec.delta = sweep.delta;
                rec.rho = out.rho;
                rec.accepted = out.accepted;
                rec.enrichment_passes = out.passes;
                rec.enrichment_added = out.added;
            } else if !self.enrichment {
                rec.accepted = true;
            }
            rec.collocation_total = model.collocation_count();
            rec.unconverged_steps = sweep.entries.iter().map(|e| e.unconverged_steps).sum();
            rec.diverged = sweep.entries.iter().filter(|e| e.diverged_at.is_some()).count();
            info!(
                "segments {n_tpar}, n = {n}: delta = {:.6e}, rho = {:.4}, points = {}",
                rec.delta, rec.rho, rec.collocation_total
            );
            if !rec.accepted {
                if may_restart {
                    self.history.restarts.push((n_tpar, n));
                    self.history.iterations.push(rec);
                    observer(OfflineEvent::Restart { segments: n_tpar, n });
                    return Ok(EpochEnd::Restart);
                }
                if !truncated {
                    warn!("robustness tolerance not met with {n_tpar} segment(s) at n = {n}; continuing");
                }
                truncated = true;
            }
            // With every segment square the indicator vanishes by construction
            // and says nothing about the error.
            let square = model.collocation.segments().iter().all(|s| s.selector().len() == n);
            delta_prev = if square { None } else { Some(sweep.delta) };
            let done = n >= config.n_max || (!square && sweep.delta <= config.eps_tol);
            if !done {
                self.extend(&mut model, &sweep, &mut sampled, &mut cached, &mut rec, n)?;
            }
            let stalled = !done && rec.next.is_none();
            self.history.iterations.push(rec);
            observer(OfflineEvent::Iteration {
                record: self.history.iterations.last().expect("just pushed"),
                model: &model,
            });
            if done || stalled {
                let sampled = sampled.into_iter().map(|(m, t)| (self.training[m].clone(), t)).collect();
                return Ok(EpochEnd::Done {
                    model,
                    truncated,
                    sampled,
                });
            }
            n += 1;
        }
    }

    /// Adds basis vector `n + 1` and one solution and one residual point per
    /// segment. Leaves `rec.next` empty when no admissible snapshot is left.
    fn extend(
        &mut self,
        model: &mut ReducedModel,
        sweep: &Sweep,
        sampled: &mut Vec<(usize, usize)>,
        cached: &mut Vec<Vec<f64>>,
        rec: &mut IterationRecord,
        n: usize,
    ) -> Result<(), GreedyError> {
        let n_seg = model.partition.n_segments();
        // Residual pairs are taken from the size-n model, before it changes.
        let mut residuals = vec![Vec::new(); n_seg];
        for (j, r) in residuals.iter_mut().enumerate() {
            match sweep.segment_pair(model, j) {
                Some((m, t)) => *r = self.full_residual(model, m, t)?,
                None => info!("segment {j}: indicator vanishes at n = {n}; no residual point this iteration"),
            }
        }
        let m = sweep.argmax;
        let mu = self.training[m].clone();
        let mut excluded: Vec<usize> = sampled.iter().filter(|(s, _)| *s == m).map(|&(_, t)| t).collect();
        let t = loop {
            let t = match greedy_time(&sweep.entries[m].errors, &excluded) {
                Ok(t) => t,
                Err(GreedyError::AllTimesSampled) => {
                    warn!("no snapshot of mu = {mu} extends the basis at n = {n}; stopping");
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let snapshot = self.cache.with(&mu, |s| s.state(t).to_vec())?;
            if model.basis.push_snapshot(&snapshot, &mu, t)? {
                break t;
            }
            debug!("snapshot (mu = {mu}, t = {t}) is dependent; trying the next time");
            excluded.push(t);
        };
        sampled.push((m, t));
        rec.next = Some((m, mu.clone(), t));
        for j in 0..n_seg {
            let out = geim_add_point(model, self.problem, j, t, &mu)?;
            rec.geim_constraint = rec.geim_constraint.max(out.constraint_residual);
        }
        for (j, r) in residuals.iter().enumerate() {
            if r.is_empty() {
                rec.eim_skipped += 1;
                continue;
            }
            match eim_add_point(model, j, r, n + 1) {
                Ok(out) => rec.eim_constraint = rec.eim_constraint.max(out.constraint_residual),
                Err(GreedyError::DegenerateResidual { segment }) => {
                    debug!("segment {segment}: residual already interpolated; no point added");
                    rec.eim_skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        *cached = residuals;
        Ok(())
    }
}
