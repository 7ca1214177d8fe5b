//! Alert state machine.
//!
//! Rules are evaluated on the scrape grid, at every `t = k * scrape_interval`
//! from 0 through `t_end`. At each step the rule's condition is the window
//! mean compared against the threshold (an empty window is false). A rule
//! moves inactive -> pending when the condition first holds, pending ->
//! firing once it has held for `for_duration` seconds, and back to inactive at
//! the first step where it does not hold. Each firing stretch is one
//! [`AlertEvent`].

use std::collections::HashMap;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rulelang::AlertRule;
use crate::timeseries::csv::CsvError;
use crate::timeseries::{ExactPrefix, Seconds, TimeSeries};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub rule_name: String,
    pub pending_since: Seconds,
    pub fired_at: Seconds,
    /// `None` while the episode is still open at the end of evaluation.
    pub resolved_at: Option<Seconds>,
}

impl AlertEvent {
    /// Whether the alert is firing at `t`.
    pub fn is_firing_at(&self, t: Seconds) -> bool {
        t >= self.fired_at && self.resolved_at.is_none_or(|r| t < r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("rule {rule}: expects metric {expected}, got series {found}")]
    MetricMismatch {
        rule: String,
        expected: String,
        found: String,
    },
    #[error("rule {rule}: no series named {metric}")]
    UnresolvedMetric { rule: String, metric: String },
    #[error("rule {rule}: metric {metric} matches {count} series")]
    AmbiguousMetric {
        rule: String,
        metric: String,
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Inactive,
    Pending { since: Seconds },
    Firing { since: Seconds, fired_at: Seconds },
}

/// Per-step condition values for a rule over a series, on the grid
/// `0, step, 2*step, ... <= t_end`.
pub fn condition_trace(
    rule: &AlertRule,
    series: &TimeSeries,
    t_end: Seconds,
) -> Vec<(Seconds, bool)> {
    let values: Vec<f64> = series.values().collect();
    let prefix = ExactPrefix::new(&values, &[rule.threshold]);
    let step = series.scrape_interval();
    (0..=t_end / step)
        .map(|k| {
            let t = k * step;
            let (lo, hi) = series.window_indices(t, rule.window);
            let cond = prefix
                .compare_mean(lo, hi, rule.threshold)
                .is_some_and(|ord| rule.comparator.holds(ord));
            (t, cond)
        })
        .collect()
}

/// Runs the state machine over a precomputed condition trace.
pub fn episodes_from_trace(rule: &AlertRule, trace: &[(Seconds, bool)]) -> Vec<AlertEvent> {
    let mut episodes = Vec::new();
    let mut phase = Phase::Inactive;
    for &(t, cond) in trace {
        phase = match (phase, cond) {
            (Phase::Inactive, false) => Phase::Inactive,
            (Phase::Pending { .. }, false) => Phase::Inactive,
            (Phase::Firing { since, fired_at }, false) => {
                episodes.push(AlertEvent {
                    rule_name: rule.name.clone(),
                    pending_since: since,
                    fired_at,
                    resolved_at: Some(t),
                });
                Phase::Inactive
            }
            (Phase::Inactive, true) if rule.for_duration == 0 => Phase::Firing {
                since: t,
                fired_at: t,
            },
            (Phase::Inactive, true) => Phase::Pending { since: t },
            (Phase::Pending { since }, true) if t - since >= rule.for_duration => {
                Phase::Firing { since, fired_at: t }
            }
            (p @ Phase::Pending { .. }, true) => p,
            (p @ Phase::Firing { .. }, true) => p,
        };
    }
    if let Phase::Firing { since, fired_at } = phase {
        episodes.push(AlertEvent {
            rule_name: rule.name.clone(),
            pending_since: since,
            fired_at,
            resolved_at: None,
        });
    }
    episodes
}

/// Evaluates one rule against the series carrying its metric.
pub fn evaluate_rule(
    rule: &AlertRule,
    series: &TimeSeries,
    t_end: Seconds,
) -> Result<Vec<AlertEvent>, EvalError> {
    if series.name() != rule.metric {
        return Err(EvalError::MetricMismatch {
            rule: rule.name.clone(),
            expected: rule.metric.clone(),
            found: series.name().to_string(),
        });
    }
    Ok(episodes_from_trace(
        rule,
        &condition_trace(rule, series, t_end),
    ))
}

/// Result of evaluating a rule set: per-rule episodes in rule-input order,
/// plus errors for rules that could not be resolved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub episodes: Vec<(String, Vec<AlertEvent>)>,
    pub errors: Vec<EvalError>,
}

impl Evaluation {
    pub fn get(&self, rule_name: &str) -> Option<&[AlertEvent]> {
        self.episodes
            .iter()
            .find(|(n, _)| n == rule_name)
            .map(|(_, e)| e.as_slice())
    }
}

fn resolve<'a>(
    rule: &AlertRule,
    series_set: &'a [TimeSeries],
) -> Result<&'a TimeSeries, EvalError> {
    let matches: Vec<&TimeSeries> = series_set
        .iter()
        .filter(|s| s.name() == rule.metric)
        .collect();
    match matches.as_slice() {
        [one] => Ok(one),
        [] => Err(EvalError::UnresolvedMetric {
            rule: rule.name.clone(),
            metric: rule.metric.clone(),
        }),
        many => Err(EvalError::AmbiguousMetric {
            rule: rule.name.clone(),
            metric: rule.metric.clone(),
            count: many.len(),
        }),
    }
}

/// Evaluates every rule independently (in parallel); errors are collected
/// rather than aborting the set.
pub fn evaluate_all(rules: &[AlertRule], series_set: &[TimeSeries], t_end: Seconds) -> Evaluation {
    let results: Vec<Result<(String, Vec<AlertEvent>), EvalError>> = rules
        .par_iter()
        .map(|rule| {
            let series = resolve(rule, series_set)?;
            Ok((rule.name.clone(), evaluate_rule(rule, series, t_end)?))
        })
        .collect();
    let mut out = Evaluation::default();
    for r in results {
        match r {
            Ok(pair) => out.episodes.push(pair),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

pub const EPISODE_CSV_HEADER: &str = "rule,pending_since,fired_at,resolved_at";

pub fn write_episodes<W: Write>(episodes: &[AlertEvent], mut out: W) -> io::Result<()> {
    writeln!(out, "{EPISODE_CSV_HEADER}")?;
    for e in episodes {
        let resolved = e.resolved_at.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            e.rule_name, e.pending_since, e.fired_at, resolved
        )?;
    }
    Ok(())
}

pub fn episodes_to_string(episodes: &[AlertEvent]) -> String {
    let mut buf = Vec::new();
    write_episodes(episodes, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("episode CSV is UTF-8")
}

pub fn read_episodes(text: &str) -> Result<Vec<AlertEvent>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CsvError::parse(1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != EPISODE_CSV_HEADER {
        return Err(CsvError::parse(
            1,
            format!("expected header `{EPISODE_CSV_HEADER}`"),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            CsvError::parse(
                e.position().map(|p| p.line() as usize).unwrap_or(0),
                e.to_string(),
            )
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let int = |i: usize| {
            record[i]
                .parse::<Seconds>()
                .map_err(|_| CsvError::parse(line, format!("invalid seconds {:?}", &record[i])))
        };
        let resolved_at = if record[3].is_empty() {
            None
        } else {
            Some(int(3)?)
        };
        let event = AlertEvent {
            rule_name: record[0].to_string(),
            pending_since: int(1)?,
            fired_at: int(2)?,
            resolved_at,
        };
        if event.pending_since > event.fired_at || resolved_at.is_some_and(|r| r <= event.fired_at)
        {
            return Err(CsvError::parse(line, "episode timestamps out of order"));
        }
        out.push(event);
    }
    Ok(out)
}

pub fn load_episodes_csv(path: impl AsRef<Path>) -> Result<Vec<AlertEvent>, CsvError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CsvError::with_path(path, e))?;
    read_episodes(&text)
}

/// Groups episodes by rule name, preserving order within each rule.
pub fn group_by_rule(episodes: &[AlertEvent]) -> HashMap<&str, Vec<&AlertEvent>> {
    let mut map: HashMap<&str, Vec<&AlertEvent>> = HashMap::new();
    for e in episodes {
        map.entry(e.rule_name.as_str()).or_default().push(e);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulelang::{parse_rule, Comparator};

    fn rule(window: Seconds, for_duration: Seconds) -> AlertRule {
        AlertRule::new("R", "errorRate", window, Comparator::Gt, 0.03, for_duration)
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::from_values("errorRate", 5, 0, values).unwrap()
    }

    #[test]
    fn constant_above_fires_at_first_step() {
        let s = series(vec![0.05; 200]);
        let eps = evaluate_rule(&rule(90, 0), &s, 995).unwrap();
        assert_eq!(
            eps,
            vec![AlertEvent {
                rule_name: "R".into(),
                pending_since: 0,
                fired_at: 0,
                resolved_at: None
            }]
        );
    }

    #[test]
    fn duration_delays_firing() {
        let s = series(vec![0.05; 200]);
        let eps = evaluate_rule(&rule(90, 60), &s, 995).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].pending_since, 0);
        assert_eq!(eps[0].fired_at, 60);
    }

    #[test]
    fn momentary_dip_resets_duration() {
        // 11 steps (55 s) above, one below, 11 above
        let mut v = vec![0.0; 4];
        v.extend([0.05; 11]);
        v.push(0.0);
        v.extend([0.05; 11]);
        v.extend([0.0; 4]);
        let s = series(v);
        let t_end = s.last_timestamp().unwrap();
        assert!(evaluate_rule(&rule(5, 60), &s, t_end).unwrap().is_empty());
        let eps = evaluate_rule(&rule(5, 0), &s, t_end).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!((eps[0].fired_at, eps[0].resolved_at), (20, Some(75)));
        assert_eq!((eps[1].fired_at, eps[1].resolved_at), (80, Some(135)));
    }

    #[test]
    fn step_crossing_is_exact() {
        // 0 -> 0.06 at t0 = 300
        let v: Vec<f64> = (0..200)
            .map(|k| if k * 5 >= 300 { 0.06 } else { 0.0 })
            .collect();
        let eps = evaluate_rule(&rule(90, 0), &series(v), 995).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].fired_at, 345);
    }

    #[test]
    fn empty_window_is_false() {
        let s = TimeSeries::from_values("errorRate", 5, 100, vec![0.5; 10]).unwrap();
        let eps = evaluate_rule(&rule(5, 0), &s, 200).unwrap();
        assert_eq!(eps[0].fired_at, 100);
        assert_eq!(eps[0].resolved_at, Some(150));
    }

    #[test]
    fn metric_mismatch() {
        let s = TimeSeries::from_values("requestRate", 5, 0, vec![1.0]).unwrap();
        assert!(matches!(
            evaluate_rule(&rule(90, 0), &s, 0),
            Err(EvalError::MetricMismatch { .. })
        ));
    }

    #[test]
    fn evaluate_all_collects_errors_in_order() {
        let s = series(vec![0.05; 20]);
        let rules = vec![
            parse_rule("alert: A\nexpr: errorRate[90s] > 0.03").unwrap(),
            parse_rule("alert: B\nexpr: latency[90s] > 0.03").unwrap(),
            parse_rule("alert: C\nexpr: errorRate[120s] > 0.03\nfor: 60s").unwrap(),
        ];
        let out = evaluate_all(&rules, &[s], 95);
        let names: Vec<_> = out.episodes.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["A", "C"]);
        assert_eq!(out.errors.len(), 1);
        assert!(matches!(&out.errors[0], EvalError::UnresolvedMetric { rule, .. } if rule == "B"));
        assert!(evaluate_all(&[], &[], 100).episodes.is_empty());
    }

    #[test]
    fn episode_csv_round_trip() {
        let eps = vec![
            AlertEvent {
                rule_name: "A".into(),
                pending_since: 5,
                fired_at: 65,
                resolved_at: Some(70),
            },
            AlertEvent {
                rule_name: "A".into(),
                pending_since: 100,
                fired_at: 100,
                resolved_at: None,
            },
        ];
        let text = episodes_to_string(&eps);
        assert_eq!(
            text,
            "rule,pending_since,fired_at,resolved_at\nA,5,65,70\nA,100,100,\n"
        );
        assert_eq!(read_episodes(&text).unwrap(), eps);
        assert_eq!(
            episodes_to_string(&[]),
            "rule,pending_since,fired_at,resolved_at\n"
        );
    }
}
