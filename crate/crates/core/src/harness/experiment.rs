use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{history_csv, num, CsvDocument, ExperimentReport, ReportRow};
use super::{write_file, ExperimentConfig, HarnessError};
use crate::fom::{write_snapshot, FullOrderProblem, Parameter, ParameterBox, SnapshotMatrix};
use crate::greedy::{run_offline_with_observer, IterationRecord, OfflineArtifact, OfflineEvent};
use crate::numerics::DenseMatrix;
use crate::rom::{read_model_prefix, write_model, OnlineSolver, PicardPolicy, ReducedModel, RomError};

pub const ARTIFACT_TRAILER_MAGIC: &[u8; 8] = b"AAROCART";
const ARTIFACT_TRAILER_VERSION: u32 = 1;

/// Provenance stored after the model bytes of an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactInfo {
    pub config_hash: String,
    pub mode: String,
    pub domain: [f64; 2],
    pub n_tpar: usize,
    pub truncated: bool,
}

pub fn write_artifact(model: &ReducedModel, info: &ArtifactInfo) -> Vec<u8> {
    let mut out = write_model(model);
    let json = serde_json::to_vec(info).expect("artifact info serializes");
    out.extend_from_slice(ARTIFACT_TRAILER_MAGIC);
    out.extend_from_slice(&ARTIFACT_TRAILER_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

pub fn read_artifact(bytes: &[u8]) -> Result<(ReducedModel, ArtifactInfo), HarnessError> {
    let mismatch = |m: String| HarnessError::ArtifactVersionMismatch(m);
    let (model, rest) = read_model_prefix(bytes).map_err(|e| mismatch(e.to_string()))?;
    if rest.len() < 20 || &rest[..8] != ARTIFACT_TRAILER_MAGIC {
        return Err(mismatch("missing artifact trailer".into()));
    }
    let version = u32::from_le_bytes(rest[8..12].try_into().unwrap());
    if version != ARTIFACT_TRAILER_VERSION {
        return Err(mismatch(format!("unsupported trailer version {version}")));
    }
    let len = u64::from_le_bytes(rest[12..20].try_into().unwrap());
    if len != (rest.len() - 20) as u64 {
        return Err(mismatch("trailer length does not match".into()));
    }
    let info = serde_json::from_slice(&rest[20..]).map_err(|e| mismatch(e.to_string()))?;
    Ok((model, info))
}

fn read_file(path: &Path) -> Result<Vec<u8>, HarnessError> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `||U - V C||_F / ||U||_F` without forming `V C` as a whole.
fn trajectory_error(model: &ReducedModel, coefficients: &DenseMatrix, fom: &SnapshotMatrix) -> Result<f64, RomError> {
    let v = model.basis.matrix();
    let (mut diff, mut reference) = (0.0, 0.0);
    for t in 0..fom.n_times() {
        let w = v.matvec(coefficients.column(t))?;
        for (a, b) in fom.state(t).iter().zip(&w) {
            diff += (a - b) * (a - b);
            reference += a * a;
        }
    }
    if reference == 0.0 {
        return Err(RomError::ZeroReference(0));
    }
    Ok((diff / reference).sqrt())
}

/// Relative error of each model against `fom`; infinite when the reduced
/// solve blew up.
fn model_errors(
    models: &[ReducedModel],
    problem: &dyn FullOrderProblem,
    mu: &Parameter,
    fom: &SnapshotMatrix,
) -> Result<Vec<f64>, HarnessError> {
    models
        .iter()
        .map(|m| {
            let sol = OnlineSolver::new(m, problem)?.solve(mu, PicardPolicy::Lenient)?;
            if sol.diagnostics.diverged_at.is_some() {
                return Ok(f64::INFINITY);
            }
            Ok(trajectory_error(m, &sol.coefficients, fom)?)
        })
        .collect()
}

/// Everything a benchmark run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub offline: OfflineArtifact,
    pub offline_seconds: f64,
    pub online_seconds: f64,
}

/// Trains with the configured mode and writes the artifact plus its
/// `.history.csv` log. The log is written even when training fails.
pub fn run_offline_stage(config: &ExperimentConfig, artifact_path: &Path) -> Result<OfflineArtifact, HarnessError> {
    let hash = config.hash();
    let problem = config.problem.build()?;
    let training = config.training_set()?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let result = run_offline_with_observer(&config.greedy, &*problem, &training, config.mode, &mut |ev| {
        match ev {
            OfflineEvent::Iteration { record, .. } => records.push(record.clone()),
            OfflineEvent::Restart { segments, n } => info!("restart after {segments} segment(s) at n = {n}"),
        }
    });
    let history_path = sibling(artifact_path, ".history.csv");
    let artifact = match result {
        Ok(a) => a,
        Err(e) => {
            write_file(&history_path, &history_csv(&hash, &records))?;
            return Err(e.into());
        }
    };
    write_file(&history_path, &history_csv(&hash, &artifact.history.iterations))?;
    write_file(artifact_path, &write_artifact(&artifact.model, &artifact_info(config, &artifact)))?;
    Ok(artifact)
}

fn artifact_info(config: &ExperimentConfig, artifact: &OfflineArtifact) -> ArtifactInfo {
    let d = config.domain_box();
    ArtifactInfo {
        config_hash: config.hash(),
        mode: artifact.mode.to_string(),
        domain: [d.lower[0], d.upper[0]],
        n_tpar: artifact.n_tpar,
        truncated: artifact.truncated,
    }
}

/// The full benchmark: training, checkpoint errors over the testing set,
/// probes, and every output file under `out_dir`.
///
/// Writes `report.csv`, `history.csv`, `timing.csv`, `artifact.bin`,
/// `config.json` and one `probe_K.csv` per probe. Only `timing.csv` depends
/// on the machine.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let hash = config.hash();
    write_file(&out_dir.join("config.json"), config.to_json().as_bytes())?;
    let problem = config.problem.build()?;
    let testing = config.testing_set()?;

    let started = Instant::now();
    let artifact_path = out_dir.join("artifact.bin");
    let offline = run_offline_stage(config, &artifact_path)?;
    std::fs::rename(sibling(&artifact_path, ".history.csv"), out_dir.join("history.csv"))
        .map_err(|e| HarnessError::io(out_dir, e))?;
    let offline_seconds = started.elapsed().as_secs_f64();
    info!("offline stage: n = {}, {} segment(s), {offline_seconds:.1} s", offline.model.n(), offline.n_tpar);

    let final_n = offline.model.n();
    let mut checkpoints: Vec<usize> = config.checkpoints().into_iter().filter(|&n| n <= final_n).collect();
    if checkpoints.last() != Some(&final_n) {
        checkpoints.push(final_n);
    }
    let models: Vec<ReducedModel> = checkpoints.iter().map(|&n| offline.model.truncated(n)).collect();
    let started = Instant::now();
    let per_mu = testing
        .par_iter()
        .map(|mu| {
            let fom = problem.solve_trajectory(mu)?;
            model_errors(&models, &*problem, mu, &fom)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let online_seconds = started.elapsed().as_secs_f64();

    let final_epoch: Vec<&IterationRecord> =
        offline.history.iterations.iter().filter(|r| r.epoch == offline.n_tpar).collect();
    let rows = checkpoints
        .iter()
        .zip(&models)
        .enumerate()
        .map(|(k, (&n, m))| {
            let delta = final_epoch.iter().rev().find(|r| r.n == n).map_or(f64::NAN, |r| r.delta);
            let e_n = per_mu.iter().map(|errs| errs[k]).sum::<f64>() / per_mu.len() as f64;
            let counts: Vec<usize> = m.collocation.segments().iter().map(|s| s.enrichment_count()).collect();
            ReportRow {
                n,
                delta,
                e_n,
                n_adap_total: counts.iter().sum(),
                n_adap_max: counts.iter().copied().max().unwrap_or(0),
                n_tpar: offline.n_tpar,
                collocation: m.collocation_count(),
            }
        })
        .collect();
    let report = ExperimentReport {
        config_hash: hash.clone(),
        mode: config.mode.to_string(),
        rows,
    };
    write_file(&out_dir.join("report.csv"), &report.to_csv())?;

    for (k, probe) in config.probes.iter().enumerate() {
        let doc = probe_csv(&hash, &offline.model, &*problem, probe.mu, &probe.time_indices)?;
        write_file(&out_dir.join(format!("probe_{k}.csv")), &doc.to_bytes())?;
    }

    let mut timing = CsvDocument::new(&hash, &["phase", "seconds"]);
    timing.push(vec!["offline".into(), num(offline_seconds)]);
    timing.push(vec!["testing".into(), num(online_seconds)]);
    write_file(&out_dir.join("timing.csv"), &timing.to_bytes())?;

    Ok(ExperimentOutcome {
        report,
        offline,
        offline_seconds,
        online_seconds,
    })
}

fn probe_csv(
    hash: &str,
    model: &ReducedModel,
    problem: &dyn FullOrderProblem,
    mu: f64,
    times: &[usize],
) -> Result<CsvDocument, HarnessError> {
    let mu = Parameter::scalar(mu);
    let fom = problem.solve_trajectory(&mu)?;
    let sol = OnlineSolver::new(model, problem)?.solve(&mu, PicardPolicy::Lenient)?;
    let grid = problem.spatial_grid();
    let mut doc = CsvDocument::new(hash, &["mu", "time_index", "time", "dof", "field", "x", "y", "fom", "rom", "abs_error"]);
    for &t in times {
        let w = model.basis.matrix().matvec(sol.coefficients.column(t)).map_err(RomError::from)?;
        for (dof, (u, r)) in fom.state(t).iter().zip(&w).enumerate() {
            let (field, x, y) = grid.position(dof);
            doc.push(vec![
                num(mu.first()),
                t.to_string(),
                num(problem.time_grid().time(t)),
                dof.to_string(),
                field.to_string(),
                num(x),
                num(y),
                num(*u),
                num(*r),
                num((u - r).abs()),
            ]);
        }
    }
    Ok(doc)
}

/// Solves a stored model at `mu`, writing the lifted trajectory to `out`
/// and the per-time indicators to `<out>.residuals.csv`.
pub fn online_eval(artifact_path: &Path, mu: &Parameter, out: &Path) -> Result<(), HarnessError> {
    let (model, info) = read_artifact(&read_file(artifact_path)?)?;
    let domain = ParameterBox::interval(info.domain[0], info.domain[1]);
    if !domain.contains(mu) {
        warn!("mu = {mu} lies outside the trained domain [{}, {}]", info.domain[0], info.domain[1]);
    }
    let problem = model.build_problem()?;
    let sol = OnlineSolver::new(&model, &*problem)?.solve(mu, PicardPolicy::Lenient)?;
    if let Some(t) = sol.diagnostics.diverged_at {
        warn!("reduced solution diverged at time index {t}");
    }
    let traj = sol.lift(&model.basis)?;
    let mut bytes = Vec::new();
    write_snapshot(traj.matrix(), &mut bytes).map_err(|e| HarnessError::io(out, e))?;
    write_file(out, &bytes)?;
    let mut doc = CsvDocument::new(&info.config_hash, &["time_index", "time", "segment", "error"]);
    for (t, e) in sol.errors().iter().enumerate().skip(1) {
        doc.push(vec![
            t.to_string(),
            num(problem.time_grid().time(t)),
            model.partition.segment_of(t)?.to_string(),
            num(*e),
        ]);
    }
    write_file(&sibling(out, ".residuals.csv"), &doc.to_bytes())?;
    Ok(())
}

/// Full-order trajectory at `mu` in the snapshot format.
pub fn run_fom(config: &ExperimentConfig, mu: &Parameter, out: &Path) -> Result<SnapshotMatrix, HarnessError> {
    let problem = config.problem.build()?;
    let traj = problem.solve_trajectory(mu)?;
    let mut bytes = Vec::new();
    write_snapshot(traj.matrix(), &mut bytes).map_err(|e| HarnessError::io(out, e))?;
    write_file(out, &bytes)?;
    Ok(traj)
}
