//! Output directory layout:
//!
//! ```text
//! run.json                  run metadata and file list
//! rules.txt                 the evaluated rules, `---`-separated
//! series/<metric>.csv       one file per series
//! faults.csv                fault schedule
//! episodes/<rule>.csv       firing episodes per rule
//! reports/<rule>.json       detection report per rule
//! plotdata.csv              timestamp, primary metric, per-rule firing flag, fault magnitude
//! ```
//!
//! Nothing time-dependent is written, so identical results give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::RunResult;
use crate::evaluator::{episodes_to_string, AlertEvent};
use crate::matcher::{DetectionReport, MatchPolicy};
use crate::rulelang::format_rule_file;
use crate::sim::{schedule_to_string, FaultWindow, ERROR_RATE};
use crate::timeseries::csv::{format_value, series_to_string};
use crate::timeseries::{Seconds, TimeSeries};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Rules,
    Series,
    Schedule,
    Episodes,
    Report,
    Plotdata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: FileKind,
    /// Path relative to the output directory.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn count(&self, kind: FileKind) -> usize {
        self.files.iter().filter(|f| f.kind == kind).count()
    }

    fn push(&mut self, kind: FileKind, path: String) {
        self.files.push(ManifestEntry { kind, path });
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub name: String,
    pub seed: u64,
    pub spec_digest: String,
    pub t_end: Seconds,
    pub policy: MatchPolicy,
    pub rules: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

fn write(dir: &Path, rel: &str, contents: &str) -> Result<(), OutputError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| OutputError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, contents).map_err(|source| OutputError::Io { path, source })
}

/// The series plotted in `plotdata.csv`: `errorRate` if present, else the
/// first rule's metric, else the first series.
fn primary_series<'a>(series: &'a [TimeSeries], rule_metrics: &[&str]) -> Option<&'a TimeSeries> {
    series
        .iter()
        .find(|s| s.name() == ERROR_RATE)
        .or_else(|| {
            rule_metrics
                .first()
                .and_then(|m| series.iter().find(|s| s.name() == *m))
        })
        .or_else(|| series.first())
}

pub fn plotdata(
    series: &[TimeSeries],
    schedule: &[FaultWindow],
    episodes: &[(String, Vec<AlertEvent>)],
    rule_metrics: &[&str],
) -> String {
    let Some(primary) = primary_series(series, rule_metrics) else {
        return String::new();
    };
    let mut out = format!("timestamp,{}", primary.name());
    for (name, _) in episodes {
        out.push_str(&format!(",{name}"));
    }
    out.push_str(",fault_magnitude\n");
    for s in primary.samples() {
        let t = s.timestamp;
        out.push_str(&format!("{t},{}", format_value(s.value)));
        for (_, eps) in episodes {
            let firing = eps.iter().any(|e| e.is_firing_at(t));
            out.push_str(if firing { ",1" } else { ",0" });
        }
        let magnitude = schedule
            .iter()
            .find(|w| w.contains(t))
            .map_or(0.0, |w| w.magnitude);
        out.push_str(&format!(",{}\n", format_value(magnitude)));
    }
    out
}

/// Writes every output file for a run and returns the manifest.
pub fn emit_outputs(
    result: &RunResult,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest, OutputError> {
    let dir = out_dir.as_ref();
    let mut manifest = Manifest::default();

    let rules_rel = "rules.txt".to_string();
    write(dir, &rules_rel, &format_rule_file(&result.rules))?;
    manifest.push(FileKind::Rules, rules_rel);

    for s in &result.series {
        let rel = format!("series/{}.csv", s.name());
        write(dir, &rel, &series_to_string(s))?;
        manifest.push(FileKind::Series, rel);
    }

    let faults_rel = "faults.csv".to_string();
    write(dir, &faults_rel, &schedule_to_string(&result.schedule))?;
    manifest.push(FileKind::Schedule, faults_rel);

    for (name, eps) in &result.episodes {
        let rel = format!("episodes/{name}.csv");
        write(dir, &rel, &episodes_to_string(eps))?;
        manifest.push(FileKind::Episodes, rel);
    }

    for report in &result.reports {
        let rel = format!("reports/{}.json", report.rule_name);
        write(dir, &rel, &report.to_json())?;
        manifest.push(FileKind::Report, rel);
    }

    let metrics: Vec<&str> = result.rules.iter().map(|r| r.metric.as_str()).collect();
    let plot_rel = "plotdata.csv".to_string();
    write(
        dir,
        &plot_rel,
        &plotdata(&result.series, &result.schedule, &result.episodes, &metrics),
    )?;
    manifest.push(FileKind::Plotdata, plot_rel);

    let metadata = RunMetadata {
        name: result.name.clone(),
        seed: result.seed,
        spec_digest: result.spec_digest.clone(),
        t_end: result.t_end,
        policy: result.policy,
        rules: result.rules.iter().map(|r| r.name.clone()).collect(),
        files: manifest.files.clone(),
    };
    let mut json = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    json.push('\n');
    write(dir, "run.json", &json)?;
    Ok(manifest)
}

pub fn load_run_metadata(out_dir: impl AsRef<Path>) -> Result<RunMetadata, OutputError> {
    let path = out_dir.as_ref().join("run.json");
    let text = fs::read_to_string(&path).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| OutputError::Parse {
        path,
        message: e.to_string(),
    })
}

/// Reads the per-rule reports of an output directory, in rule order.
pub fn load_reports(out_dir: impl AsRef<Path>) -> Result<Vec<DetectionReport>, OutputError> {
    let dir = out_dir.as_ref();
    let metadata = load_run_metadata(dir)?;
    metadata
        .files
        .iter()
        .filter(|f| f.kind == FileKind::Report)
        .map(|f| {
            let path = dir.join(&f.path);
            let text = fs::read_to_string(&path).map_err(|source| OutputError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| OutputError::Parse {
                path,
                message: e.to_string(),
            })
        })
        .collect()
}
