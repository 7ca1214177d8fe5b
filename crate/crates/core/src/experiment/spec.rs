//! Experiment spec files (TOML).
//!
//! Every section except `name` and `rules` is optional and falls back to the
//! defaults of the corresponding type. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matcher::MatchPolicy;
use crate::rulelang::{self, AlertRule, RuleDocument};
use crate::sim::{ErrorModel, FaultPatternSpec, WorkloadSpec, ERROR_RATE, REQUEST_RATE};
use crate::timeseries::Seconds;

pub const DEFAULT_SCRAPE_INTERVAL: Seconds = 5;

fn default_scrape_interval() -> Seconds {
    DEFAULT_SCRAPE_INTERVAL
}

/// Where the metric streams and fault schedule come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Mode {
    #[default]
    Simulate,
    /// Recorded series and schedule CSVs; relative paths resolve against the
    /// spec file's directory.
    Replay {
        series: Vec<PathBuf>,
        schedule: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scrape_interval")]
    pub scrape_interval: Seconds,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub pattern: FaultPatternSpec,
    #[serde(default)]
    pub error_model: ErrorModel,
    #[serde(default)]
    pub policy: MatchPolicy,
    #[serde(default)]
    pub mode: Mode,
    /// Rule documents, one rule each.
    #[serde(default)]
    pub rules: Vec<String>,
    /// Directory relative replay paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub problems: Vec<FieldProblem>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid experiment spec:")?;
        for p in &self.problems {
            write!(f, "\n  {p}")?;
        }
        Ok(())
    }
}

impl ValidationError {
    pub fn fields(&self) -> Vec<&str> {
        self.problems.iter().map(|p| p.field.as_str()).collect()
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl ExperimentSpec {
    /// A minimal simulated experiment with default parameters.
    pub fn new(name: impl Into<String>, rules: Vec<String>) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            scrape_interval: DEFAULT_SCRAPE_INTERVAL,
            workload: WorkloadSpec::default(),
            pattern: FaultPatternSpec::default(),
            error_model: ErrorModel::default(),
            policy: MatchPolicy::default(),
            mode: Mode::Simulate,
            rules,
            base_dir: None,
        }
    }

    /// Parsed rules; only meaningful on a validated spec.
    pub fn parsed_rules(&self) -> Result<Vec<AlertRule>, rulelang::RuleError> {
        self.rules.iter().map(|r| rulelang::parse_rule(r)).collect()
    }

    /// All validation problems, with dotted field paths.
    pub fn problems(&self) -> Vec<FieldProblem> {
        let mut out = Vec::new();
        let mut push = |field: String, message: String| out.push(FieldProblem { field, message });
        if self.name.trim().is_empty() {
            push("name".into(), "must not be empty".into());
        }
        if self.scrape_interval == 0 {
            push("scrape_interval".into(), "must be positive".into());
        }
        for (f, m) in self.workload.problems() {
            push(format!("workload.{f}"), m);
        }
        for (f, m) in self.pattern.problems() {
            push(format!("pattern.{f}"), m);
        }
        for (f, m) in self.error_model.problems() {
            push(format!("error_model.{f}"), m);
        }
        for (f, m) in self.policy.problems() {
            push(format!("policy.{f}"), m);
        }

        if self.rules.is_empty() {
            push("rules".into(), "at least one rule is required".into());
        }
        let docs: Vec<RuleDocument<'_>> = self
            .rules
            .iter()
            .map(|r| RuleDocument {
                first_line: 1,
                text: r,
            })
            .collect();
        for d in rulelang::lint_documents(&docs, rulelang::DEFAULT_RATIO_METRICS) {
            if d.severity == rulelang::Severity::Error {
                push(format!("rules[{}]", d.document), d.to_string());
            }
        }

        match &self.mode {
            Mode::Simulate => {
                if self.pattern.problems().is_empty() && self.workload.problems().is_empty() {
                    if self.pattern.first_start < self.workload.warmup {
                        push(
                            "pattern.first_start".into(),
                            format!(
                                "faults start at {} during the {} s warmup",
                                self.pattern.first_start, self.workload.warmup
                            ),
                        );
                    }
                    if self.pattern.end() > self.workload.duration {
                        push(
                            "workload.duration".into(),
                            format!(
                                "{} s ends before the last fault window ({} s)",
                                self.workload.duration,
                                self.pattern.end()
                            ),
                        );
                    }
                }
                for (i, rule) in self.rules.iter().enumerate() {
                    if let Ok(rule) = rulelang::parse_rule(rule) {
                        if rule.metric != ERROR_RATE && rule.metric != REQUEST_RATE {
                            push(
                                format!("rules[{i}]"),
                                format!(
                                    "metric {} is not simulated (available: {ERROR_RATE}, {REQUEST_RATE})",
                                    rule.metric
                                ),
                            );
                        }
                    }
                }
            }
            Mode::Replay { series, .. } => {
                if series.is_empty() {
                    push(
                        "mode.series".into(),
                        "at least one series file is required".into(),
                    );
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { problems })
        }
    }

    /// Canonical JSON form; the digest is computed over it.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String, SpecError> {
        toml::to_string(self).map_err(|e| SpecError::Parse {
            origin: self.name.clone(),
            message: e.to_string(),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// Parses and validates spec text.
pub fn parse_spec(text: &str, origin: &str) -> Result<ExperimentSpec, SpecError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| SpecError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut spec = parse_spec(&text, &path.display().to_string())?;
    spec.base_dir = path.parent().map(Path::to_path_buf);
    Ok(spec)
}

pub fn save_spec(spec: &ExperimentSpec, path: impl AsRef<Path>) -> Result<(), SpecError> {
    let path = path.as_ref();
    std::fs::write(path, spec.to_toml()?).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}
