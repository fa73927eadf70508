//! Configuration, experiment orchestration and persistence for the CLI.

mod config;
mod experiment;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fom::FomError;
use crate::greedy::GreedyError;
use crate::rom::RomError;

pub use config::{generate_parameter_set, load_config, ExperimentConfig, Probe, SetSpec, Spacing};
pub use experiment::{
    online_eval, read_artifact, run_experiment, run_fom, run_offline_stage, write_artifact, ArtifactInfo,
    ExperimentOutcome, ARTIFACT_TRAILER_MAGIC,
};
pub use report::{history_csv, num, CsvDocument, ExperimentReport, ReportRow, REPORT_FORMAT_MAJOR, REPORT_FORMAT_MINOR};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {key} {constraint}")]
    Validation { key: String, constraint: String },
    #[error("invalid parameter domain [{lower}, {upper}] for {count} values")]
    InvalidDomain { lower: f64, upper: f64, count: usize },
    #[error("unreadable artifact: {0}")]
    ArtifactVersionMismatch(String),
    #[error("unreadable report: {0}")]
    ReportFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Fom(#[from] FomError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation { .. } | HarnessError::InvalidDomain { .. } => 2,
            HarnessError::Greedy(GreedyError::InvalidConfig(_)) => 2,
            HarnessError::Greedy(_) | HarnessError::Rom(_) | HarnessError::Fom(_) => 3,
            _ => 1,
        }
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    write_atomic(path, bytes).map_err(|e| HarnessError::io(path, e))
}
