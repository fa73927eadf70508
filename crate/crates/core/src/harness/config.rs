use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::fom::{Parameter, ParameterBox, ProblemSpec};
use crate::greedy::{GreedyConfig, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    LogUniform,
    Uniform,
}

/// How to generate a training or testing set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub count: usize,
    pub spacing: Spacing,
    /// Defaults to the parameter domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// A parameter whose pointwise FOM/ROM error field is written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub mu: f64,
    pub time_indices: Vec<usize>,
}

/// One benchmark run, as read from JSON.
///
/// Defaults: `mode` is AAROC, `greedy.seed` is 0, `domain` is the problem's
/// standard box, `checkpoints` is every fifth basis size plus `n_max`.
/// Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
    pub training: SetSpec,
    pub testing: SetSpec,
    pub greedy: GreedyConfig,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Probe>,
}

fn default_mode() -> Mode {
    Mode::Aaroc
}

fn invalid(key: &str, constraint: &str) -> HarnessError {
    HarnessError::Validation {
        key: key.to_string(),
        constraint: constraint.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if config.domain.is_none() {
            let b = config.problem.default_box();
            config.domain = Some([b.lower[0], b.upper[0]]);
        }
        if config.checkpoints.is_none() {
            config.checkpoints = Some(default_checkpoints(config.greedy.n_max));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn domain_box(&self) -> ParameterBox {
        let [a, b] = self.domain.unwrap_or_else(|| {
            let d = self.problem.default_box();
            [d.lower[0], d.upper[0]]
        });
        ParameterBox::interval(a, b)
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone().unwrap_or_else(|| default_checkpoints(self.greedy.n_max));
        c.sort_unstable();
        c.dedup();
        c
    }

    fn set_range(&self, set: &SetSpec) -> [f64; 2] {
        let d = self.domain_box();
        set.range.unwrap_or([d.lower[0], d.upper[0]])
    }

    pub fn training_set(&self) -> Result<Vec<Parameter>, HarnessError> {
        let [a, b] = self.set_range(&self.training);
        generate_parameter_set(a, b, self.training.count, self.training.spacing)
    }

    pub fn testing_set(&self) -> Result<Vec<Parameter>, HarnessError> {
        let [a, b] = self.set_range(&self.testing);
        generate_parameter_set(a, b, self.testing.count, self.testing.spacing)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let problem = self.problem.build().map_err(|e| invalid("problem", &e.to_string()))?;
        let n_steps = problem.time_grid().n_steps;
        let d = self.domain_box();
        if !(d.lower[0] < d.upper[0]) {
            return Err(invalid("domain", "lower < upper"));
        }
        for (key, set) in [("training", &self.training), ("testing", &self.testing)] {
            if set.count < 1 {
                return Err(invalid(&format!("{key}.count"), "≥ 1"));
            }
            let [a, b] = self.set_range(set);
            if !(a <= b) || a < d.lower[0] || b > d.upper[0] {
                return Err(invalid(&format!("{key}.range"), "inside the domain, lower ≤ upper"));
            }
            if set.spacing == Spacing::LogUniform && !(a > 0.0) {
                return Err(invalid(&format!("{key}.range"), "> 0 for log-uniform spacing"));
            }
        }
        self.greedy.validate().map_err(|e| invalid("greedy", &e.to_string()))?;
        if self.greedy.n_tpar_max > n_steps {
            return Err(invalid("greedy.n_tpar_max", "≤ number of time steps"));
        }
        if let Some(i) = self.greedy.mu1_index {
            if i >= self.training.count {
                return Err(invalid("greedy.mu1_index", "< training.count"));
            }
        }
        if self.checkpoints().iter().any(|&c| c < 1 || c > self.greedy.n_max) {
            return Err(invalid("checkpoints", "each within 1..=n_max"));
        }
        for p in &self.probes {
            if !d.contains(&Parameter::scalar(p.mu)) {
                return Err(invalid("probes.mu", "inside the domain"));
            }
            if p.time_indices.iter().any(|&t| t > n_steps) {
                return Err(invalid("probes.time_indices", "≤ number of time steps"));
            }
        }
        let train = self.training_set()?;
        let test = self.testing_set()?;
        if test.iter().any(|t| train.contains(t)) {
            return Err(invalid("testing", "disjoint from the training set"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON form, in hex.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn default_checkpoints(n_max: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (5..=n_max).step_by(5).collect();
    if c.last() != Some(&n_max) {
        c.push(n_max);
    }
    c
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_json(&text)
}

/// `count` values from `lower` to `upper`, endpoints included. A single
/// value sits at the midpoint (geometric midpoint for log spacing).
pub fn generate_parameter_set(
    lower: f64,
    upper: f64,
    count: usize,
    spacing: Spacing,
) -> Result<Vec<Parameter>, HarnessError> {
    if !(lower < upper) || (spacing == Spacing::LogUniform && !(lower > 0.0)) || count == 0 {
        return Err(HarnessError::InvalidDomain { lower, upper, count });
    }
    let (a, b) = match spacing {
        Spacing::LogUniform => (lower.ln(), upper.ln()),
        Spacing::Uniform => (lower, upper),
    };
    let map = |s: f64| match spacing {
        Spacing::LogUniform => s.exp(),
        Spacing::Uniform => s,
    };
    if count == 1 {
        return Ok(vec![Parameter::scalar(map(0.5 * (a + b)))]);
    }
    let last = count - 1;
    Ok((0..count)
        .map(|k| {
            let v = match k {
                0 => lower,
                k if k == last => upper,
                k => map(a + (b - a) * k as f64 / last as f64),
            };
            Parameter::scalar(v)
        })
        .collect())
}
