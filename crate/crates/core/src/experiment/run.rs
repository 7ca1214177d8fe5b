use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use super::spec::{ExperimentSpec, Mode, SpecError, ValidationError};
use crate::evaluator::{self, AlertEvent, EvalError};
use crate::matcher::{self, DetectionReport, MatchError, MatchPolicy};
use crate::rulelang::{self, AlertRule, Comparator};
use crate::sim::{self, FaultWindow};
use crate::timeseries::csv::{load_series_csv, CsvError};
use crate::timeseries::{Seconds, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Simulate,
    Evaluate,
    Classify,
    Emit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Simulate => "simulate",
            Stage::Evaluate => "evaluate",
            Stage::Classify => "classify",
            Stage::Emit => "emit",
        })
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("override {path}: {message}")]
    Override { path: String, message: String },
    #[error("{stage} stage: {source}")]
    Csv {
        stage: Stage,
        #[source]
        source: CsvError,
    },
    #[error("{stage} stage: {message}")]
    Stage { stage: Stage, message: String },
}

impl ExperimentError {
    fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        ExperimentError::Stage {
            stage,
            message: err.to_string(),
        }
    }

    /// Whether the failure is in user input (spec, overrides, input files)
    /// rather than at run time.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Spec(_)
                | ExperimentError::Override { .. }
                | ExperimentError::Csv { .. }
        )
    }
}

impl From<ValidationError> for ExperimentError {
    fn from(e: ValidationError) -> Self {
        ExperimentError::Spec(SpecError::Validation(e))
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub spec_digest: String,
    pub seed: u64,
    pub t_end: Seconds,
    pub policy: MatchPolicy,
    pub series: Vec<TimeSeries>,
    pub schedule: Vec<FaultWindow>,
    pub rules: Vec<AlertRule>,
    /// Per-rule episodes, in rule order.
    pub episodes: Vec<(String, Vec<AlertEvent>)>,
    /// Per-rule reports, in rule order.
    pub reports: Vec<DetectionReport>,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn report(&self, rule: &str) -> Option<&DetectionReport> {
        self.reports.iter().find(|r| r.rule_name == rule)
    }

    pub fn episodes_of(&self, rule: &str) -> Option<&[AlertEvent]> {
        self.episodes
            .iter()
            .find(|(n, _)| n == rule)
            .map(|(_, e)| e.as_slice())
    }
}

/// Episodes per rule, in rule order.
pub type RuleEpisodes = Vec<(String, Vec<AlertEvent>)>;

/// Evaluates and scores a rule set against given series and schedule.
pub fn evaluate_and_classify(
    rules: &[AlertRule],
    series: &[TimeSeries],
    schedule: &[FaultWindow],
    policy: &MatchPolicy,
    t_end: Seconds,
) -> Result<(RuleEpisodes, Vec<DetectionReport>), ExperimentError> {
    let evaluation = evaluator::evaluate_all(rules, series, t_end);
    if !evaluation.errors.is_empty() {
        let messages: Vec<String> = evaluation.errors.iter().map(EvalError::to_string).collect();
        return Err(ExperimentError::stage(Stage::Evaluate, messages.join("; ")));
    }
    let reports = evaluation
        .episodes
        .iter()
        .map(|(name, eps)| matcher::classify(name, eps, schedule, policy))
        .collect::<Result<Vec<_>, MatchError>>()
        .map_err(|e| ExperimentError::stage(Stage::Classify, e))?;
    Ok((evaluation.episodes, reports))
}

/// Runs one experiment end to end. Deterministic given the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunResult, ExperimentError> {
    let started = Instant::now();
    spec.validate()?;
    let rules = spec
        .parsed_rules()
        .map_err(|e| ExperimentError::stage(Stage::Load, e))?;

    let (series, schedule, t_end) = match &spec.mode {
        Mode::Simulate => {
            let schedule = sim::build_fault_schedule(&spec.pattern);
            let simulation = sim::simulate(
                &spec.workload,
                &schedule,
                &spec.error_model,
                spec.scrape_interval,
                spec.seed,
            )
            .map_err(|e| ExperimentError::stage(Stage::Simulate, e))?;
            let t_end = spec.workload.duration / spec.scrape_interval * spec.scrape_interval;
            (simulation.series, simulation.schedule, t_end)
        }
        Mode::Replay { series, schedule } => {
            let csv_err = |source| ExperimentError::Csv {
                stage: Stage::Load,
                source,
            };
            let loaded = series
                .iter()
                .map(|p| load_series_csv(spec.resolve(p)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(csv_err)?;
            let schedule = sim::load_fault_schedule_csv(spec.resolve(schedule)).map_err(csv_err)?;
            let t_end = replay_end(&loaded);
            (loaded, schedule, t_end)
        }
    };

    let (episodes, reports) =
        evaluate_and_classify(&rules, &series, &schedule, &spec.policy, t_end)?;
    Ok(RunResult {
        name: spec.name.clone(),
        spec_digest: spec.digest(),
        seed: spec.seed,
        t_end,
        policy: spec.policy,
        series,
        schedule,
        rules,
        episodes,
        reports,
        wall_time: started.elapsed(),
    })
}

/// Last timestamp present in any of the series.
pub fn replay_end(series: &[TimeSeries]) -> Seconds {
    series
        .iter()
        .filter_map(TimeSeries::last_timestamp)
        .max()
        .unwrap_or(0)
}

/// A named set of spec overrides.
///
/// Paths are dotted field paths into the spec (`seed`,
/// `pattern.repetitions`, `error_model.noise_std`, `rules`, ...). The form
/// `rules.<RuleName>.<field>` edits one rule, where field is `window`,
/// `for` (seconds, or a string such as `"2m"`), `threshold` or `comparator`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Variation {
    pub name: Option<String>,
    pub overrides: Vec<(String, toml::Value)>,
}

impl Variation {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: Some(name.into()),
            overrides: Vec::new(),
        }
    }

    pub fn set(mut self, path: impl Into<String>, value: impl Into<toml::Value>) -> Self {
        self.overrides.push((path.into(), value.into()));
        self
    }

    pub fn seed_only(seed: u64) -> Self {
        Self::new(format!("seed-{seed}")).set("seed", seed as i64)
    }

    fn sets_seed(&self) -> bool {
        self.overrides.iter().any(|(p, _)| p == "seed")
    }
}

fn override_err(path: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Override {
        path: path.to_string(),
        message: message.into(),
    }
}

fn duration_value(path: &str, value: &toml::Value) -> Result<Seconds, ExperimentError> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as Seconds),
        toml::Value::String(s) => {
            let probe = format!("alert: X\nexpr: x[1s] > 0\nfor: {s}");
            rulelang::parse_rule(&probe)
                .map(|r| r.for_duration)
                .map_err(|e| override_err(path, e.message))
        }
        other => Err(override_err(path, format!("expected seconds, got {other}"))),
    }
}

fn apply_rule_override(
    rules: &mut [String],
    path: &str,
    rule_name: &str,
    field: &str,
    value: &toml::Value,
) -> Result<(), ExperimentError> {
    let slot = rules
        .iter_mut()
        .find(|text| rulelang::parse_rule(text).is_ok_and(|r| r.name == rule_name))
        .ok_or_else(|| override_err(path, format!("no rule named {rule_name}")))?;
    let mut rule = rulelang::parse_rule(slot).expect("matched above");
    match field {
        "window" => rule.window = duration_value(path, value)?,
        "for" => rule.for_duration = duration_value(path, value)?,
        "threshold" => {
            rule.threshold = match value {
                toml::Value::Float(f) => *f,
                toml::Value::Integer(i) => *i as f64,
                other => {
                    return Err(override_err(
                        path,
                        format!("expected a number, got {other}"),
                    ))
                }
            }
        }
        "comparator" => {
            let s = value.as_str().unwrap_or_default();
            rule.comparator = Comparator::ALL
                .into_iter()
                .find(|c| c.as_str() == s)
                .ok_or_else(|| override_err(path, format!("unknown comparator {value}")))?;
        }
        other => return Err(override_err(path, format!("unknown rule field {other}"))),
    }
    rule.validate().map_err(|m| override_err(path, m))?;
    *slot = rulelang::format_rule(&rule);
    Ok(())
}

/// Applies a variation to a spec. Every path must name an existing field.
pub fn apply_variation(
    base: &ExperimentSpec,
    variation: &Variation,
) -> Result<ExperimentSpec, ExperimentError> {
    let mut tree =
        toml::Value::try_from(base).map_err(|e| override_err("<spec>", e.to_string()))?;
    let mut rule_edits = Vec::new();
    for (path, value) in &variation.overrides {
        let parts: Vec<&str> = path.split('.').collect();
        if parts.len() == 3 && parts[0] == "rules" {
            rule_edits.push((path, parts[1], parts[2], value));
            continue;
        }
        let mut node = &mut tree;
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                override_err(path, format!("{} is not a table", parts[..i].join(".")))
            })?;
            node = table
                .get_mut(*part)
                .ok_or_else(|| override_err(path, "no such field"))?;
        }
        *node = value.clone();
    }
    let mut spec: ExperimentSpec = tree
        .try_into()
        .map_err(|e: toml::de::Error| override_err("<spec>", e.message().to_string()))?;
    for (path, rule_name, field, value) in rule_edits {
        apply_rule_override(&mut spec.rules, path, rule_name, field, value)?;
    }
    spec.base_dir = base.base_dir.clone();
    spec.validate()?;
    Ok(spec)
}

/// Runs variations of `base`, at most `parallelism` at a time. Results come
/// back in input order. A variation that does not set `seed` runs with
/// `base.seed + index`. Failures are reported in place.
pub fn run_batch(
    base: &ExperimentSpec,
    variations: &[Variation],
    parallelism: usize,
) -> Vec<Result<RunResult, ExperimentError>> {
    let job = |(index, variation): (usize, &Variation)| {
        let mut spec = apply_variation(base, variation)?;
        if !variation.sets_seed() {
            spec.seed = base.seed.wrapping_add(index as u64);
        }
        if let Some(name) = &variation.name {
            spec.name = format!("{}/{}", base.name, name);
        }
        run_experiment(&spec)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build();
    match pool {
        Ok(pool) => pool.install(|| variations.par_iter().enumerate().map(job).collect()),
        Err(_) => variations.iter().enumerate().map(job).collect(),
    }
}
