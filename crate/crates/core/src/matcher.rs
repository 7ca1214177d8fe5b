//! Scores alert episodes against the fault schedule.
//!
//! Faults are grouped into units (single phases, or patterns of phases
//! separated by less than `pattern_merge_gap`). An episode detects unit `U`
//! when its `fired_at` lies in `[U.start - grace_before_start, U.end +
//! grace_after_end]`. The first detecting episode of a unit is a true
//! positive; later ones are duplicate true positives; episodes matching no
//! unit are false positives; undetected units are false negatives.
//!
//! When an episode could match several units it goes to the unit with the
//! smallest non-negative `fired_at - start` (earlier unit on ties). If every
//! candidate starts after `fired_at` (only possible with a positive
//! `grace_before_start`) it goes to the nearest upcoming unit.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::AlertEvent;
use crate::sim::FaultWindow;
use crate::timeseries::Seconds;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Phase,
    #[default]
    Pattern,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phase" => Ok(Granularity::Phase),
            "pattern" => Ok(Granularity::Pattern),
            other => Err(format!(
                "unknown granularity {other:?} (expected phase or pattern)"
            )),
        }
    }
}

/// What counts as a valid detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchPolicy {
    pub grace_after_end: Seconds,
    pub grace_before_start: Seconds,
    pub granularity: Granularity,
    /// Consecutive windows closer than this merge into one pattern.
    pub pattern_merge_gap: Seconds,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            grace_after_end: 30,
            grace_before_start: 0,
            granularity: Granularity::Pattern,
            pattern_merge_gap: 120,
        }
    }
}

impl MatchPolicy {
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.pattern_merge_gap == 0 {
            out.push(("pattern_merge_gap".into(), "must be positive".into()));
        }
        out
    }
}

/// A phase, or a merged run of phases, scored as one detection target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultUnit {
    pub index: usize,
    pub start: Seconds,
    pub end: Seconds,
    /// Indices into the schedule of the windows this unit covers.
    pub first_window: usize,
    pub last_window: usize,
    pub peak_magnitude: f64,
}

pub fn merge_fault_units(schedule: &[FaultWindow], policy: &MatchPolicy) -> Vec<FaultUnit> {
    let mut units: Vec<FaultUnit> = Vec::new();
    for (i, w) in schedule.iter().enumerate() {
        let merge = policy.granularity == Granularity::Pattern
            && units
                .last()
                .is_some_and(|u| w.start.saturating_sub(u.end) < policy.pattern_merge_gap);
        if merge {
            let u = units.last_mut().expect("checked above");
            u.end = u.end.max(w.end);
            u.last_window = i;
            u.peak_magnitude = u.peak_magnitude.max(w.magnitude);
        } else {
            units.push(FaultUnit {
                index: units.len(),
                start: w.start,
                end: w.end,
                first_window: i,
                last_window: i,
                peak_magnitude: w.magnitude,
            });
        }
    }
    units
}

/// Precision or recall; `Undefined` when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(numerator as f64 / denominator as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Defined(v) => write!(f, "{v:.3}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Defined(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Metric::Defined(v)),
            Raw::Text(t) if t == "undefined" => Ok(Metric::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"undefined\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub unit: FaultUnit,
    pub detected: bool,
    pub first_fired_at: Option<Seconds>,
    pub time_to_detect: Option<i64>,
    pub episode_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub rule_name: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub duplicate_tp: usize,
    pub precision: Metric,
    pub recall: Metric,
    /// Time-to-detect of each detected unit, in unit order.
    pub ttd_values: Vec<i64>,
    pub records: Vec<DetectionRecord>,
}

impl DetectionReport {
    /// Total episodes scored: first detections, duplicates and false alarms.
    pub fn episodes(&self) -> usize {
        self.tp + self.duplicate_tp + self.fp
    }

    pub fn median_ttd(&self) -> Option<f64> {
        let mut v = self.ttd_values.clone();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn assemble(rule_name: &str, records: Vec<DetectionRecord>, fp: usize) -> Self {
        let tp = records.iter().filter(|r| r.detected).count();
        let duplicate_tp: usize = records
            .iter()
            .filter(|r| r.detected)
            .map(|r| r.episode_count - 1)
            .sum();
        let fn_ = records.len() - tp;
        let ttd_values = records.iter().filter_map(|r| r.time_to_detect).collect();
        Self {
            rule_name: rule_name.to_string(),
            tp,
            fp,
            fn_,
            duplicate_tp,
            precision: Metric::ratio(tp + duplicate_tp, tp + duplicate_tp + fp),
            recall: Metric::ratio(tp, tp + fn_),
            ttd_values,
            records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("episodes are not sorted by fired_at (index {index})")]
    UnsortedInput { index: usize },
    #[error("fault schedule is not sorted and non-overlapping (index {index})")]
    UnsortedSchedule { index: usize },
}

fn check_schedule(schedule: &[FaultWindow]) -> Result<(), MatchError> {
    for (i, pair) in schedule.windows(2).enumerate() {
        if pair[1].start < pair[0].end || pair[0].start >= pair[0].end {
            return Err(MatchError::UnsortedSchedule { index: i + 1 });
        }
    }
    Ok(())
}

fn empty_records(units: Vec<FaultUnit>) -> Vec<DetectionRecord> {
    units
        .into_iter()
        .map(|unit| DetectionRecord {
            unit,
            detected: false,
            first_fired_at: None,
            time_to_detect: None,
            episode_count: 0,
        })
        .collect()
}

fn credit(record: &mut DetectionRecord, fired_at: Seconds) {
    if !record.detected {
        record.detected = true;
        record.first_fired_at = Some(fired_at);
        record.time_to_detect = Some(fired_at as i64 - record.unit.start as i64);
    }
    record.episode_count += 1;
}

/// Classifies one rule's episodes. Episodes must be sorted by `fired_at`.
pub fn classify(
    rule_name: &str,
    episodes: &[AlertEvent],
    schedule: &[FaultWindow],
    policy: &MatchPolicy,
) -> Result<DetectionReport, MatchError> {
    if let Some(i) = episodes
        .windows(2)
        .position(|p| p[1].fired_at < p[0].fired_at)
    {
        return Err(MatchError::UnsortedInput { index: i + 1 });
    }
    check_schedule(schedule)?;
    let mut records = empty_records(merge_fault_units(schedule, policy));
    let mut fp = 0;
    for e in episodes {
        let f = e.fired_at;
        // Units are sorted with increasing starts and ends, so candidates
        // form the contiguous run [first, last).
        let first = records.partition_point(|r| r.unit.end + policy.grace_after_end < f);
        let last = records.partition_point(|r| r.unit.start <= f + policy.grace_before_start);
        if first >= last {
            fp += 1;
            continue;
        }
        // latest candidate starting at or before f, else the earliest one
        let started = records[first..last].partition_point(|r| r.unit.start <= f);
        let target = if started > 0 {
            first + started - 1
        } else {
            first
        };
        credit(&mut records[target], f);
    }
    Ok(DetectionReport::assemble(rule_name, records, fp))
}

/// Exhaustive reference implementation of [`classify`]: every episode is
/// checked against every unit with no ordering assumptions.
pub fn classify_bruteforce(
    rule_name: &str,
    episodes: &[AlertEvent],
    schedule: &[FaultWindow],
    policy: &MatchPolicy,
) -> DetectionReport {
    let mut records = empty_records(merge_fault_units(schedule, policy));
    let mut order: Vec<&AlertEvent> = episodes.iter().collect();
    order.sort_by_key(|e| e.fired_at);
    let mut fp = 0;
    for e in order {
        let f = e.fired_at as i64;
        let mut best: Option<(usize, (bool, i64))> = None;
        for (i, r) in records.iter().enumerate() {
            let lo = r.unit.start as i64 - policy.grace_before_start as i64;
            let hi = (r.unit.end + policy.grace_after_end) as i64;
            if f < lo || f > hi {
                continue;
            }
            let offset = f - r.unit.start as i64;
            // non-negative offsets first, then smallest |offset|
            let key = (offset < 0, offset.abs());
            if best.is_none_or(|(_, k)| key < k) {
                best = Some((i, key));
            }
        }
        match best {
            Some((i, _)) => credit(&mut records[i], e.fired_at),
            None => fp += 1,
        }
    }
    DetectionReport::assemble(rule_name, records, fp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_fault_schedule, FaultPatternSpec};

    fn ep(fired_at: Seconds) -> AlertEvent {
        AlertEvent {
            rule_name: "R".into(),
            pending_since: fired_at,
            fired_at,
            resolved_at: Some(fired_at + 5),
        }
    }

    fn window(start: Seconds, end: Seconds) -> FaultWindow {
        FaultWindow::new("packet_loss", start, end, 0.25)
    }

    #[test]
    fn reference_schedule_units() {
        let schedule = build_fault_schedule(&FaultPatternSpec::default());
        let units = merge_fault_units(&schedule, &MatchPolicy::default());
        assert_eq!(units.len(), 6);
        assert_eq!((units[0].start, units[0].end), (120, 420));
        assert_eq!((units[1].start, units[1].end), (660, 960));
        assert_eq!(units[0].peak_magnitude, 0.25);
        let phase = MatchPolicy {
            granularity: Granularity::Phase,
            ..MatchPolicy::default()
        };
        assert_eq!(merge_fault_units(&schedule, &phase).len(), 18);
        let single = [window(10, 20)];
        assert_eq!(merge_fault_units(&single, &phase).len(), 1);
        assert_eq!(merge_fault_units(&single, &MatchPolicy::default()).len(), 1);
    }

    #[test]
    fn containment() {
        let r = classify(
            "R",
            &[ep(200)],
            &[window(120, 420)],
            &MatchPolicy::default(),
        )
        .unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        assert_eq!(r.ttd_values, [80]);
        assert_eq!(r.records[0].first_fired_at, Some(200));
    }

    #[test]
    fn late_alert_grace() {
        let schedule = [window(120, 420)];
        let with = classify("R", &[ep(445)], &schedule, &MatchPolicy::default()).unwrap();
        assert_eq!((with.tp, with.fp, with.fn_), (1, 0, 0));
        let strict = MatchPolicy {
            grace_after_end: 0,
            ..MatchPolicy::default()
        };
        let without = classify("R", &[ep(445)], &schedule, &strict).unwrap();
        assert_eq!((without.tp, without.fp, without.fn_), (0, 1, 1));
    }

    #[test]
    fn five_of_six_with_duplicate() {
        let schedule = build_fault_schedule(&FaultPatternSpec::default());
        let eps = [ep(200), ep(300), ep(700), ep(1300), ep(1800), ep(2300)];
        let r = classify("R", &eps, &schedule, &MatchPolicy::default()).unwrap();
        assert_eq!((r.tp, r.duplicate_tp, r.fp, r.fn_), (5, 1, 0, 1));
        assert_eq!(r.precision, Metric::Defined(1.0));
        assert!((r.recall.value().unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.episodes(), 6);
    }

    #[test]
    fn no_episodes() {
        let schedule = build_fault_schedule(&FaultPatternSpec::default());
        let r = classify("R", &[], &schedule, &MatchPolicy::default()).unwrap();
        assert_eq!((r.tp, r.fn_), (0, 6));
        assert_eq!(r.recall, Metric::Defined(0.0));
        assert_eq!(r.precision, Metric::Undefined);
        assert_eq!(r.median_ttd(), None);
    }

    #[test]
    fn all_empty() {
        let r = classify("R", &[], &[], &MatchPolicy::default()).unwrap();
        let b = classify_bruteforce("R", &[], &[], &MatchPolicy::default());
        assert_eq!(r, b);
        assert_eq!(
            (r.precision, r.recall),
            (Metric::Undefined, Metric::Undefined)
        );
    }

    #[test]
    fn unsorted_episodes_rejected() {
        let err = classify("R", &[ep(300), ep(200)], &[], &MatchPolicy::default()).unwrap_err();
        assert_eq!(err, MatchError::UnsortedInput { index: 1 });
    }

    #[test]
    fn overlapping_candidates_prefer_started_unit() {
        // unit A [0,100] with grace 60 reaches 160; unit B starts at 150
        let schedule = [window(0, 100), window(150, 200)];
        let policy = MatchPolicy {
            grace_after_end: 60,
            granularity: Granularity::Phase,
            ..MatchPolicy::default()
        };
        let r = classify("R", &[ep(140), ep(155)], &schedule, &policy).unwrap();
        assert_eq!(r.records[0].episode_count, 1);
        assert_eq!(r.records[1].first_fired_at, Some(155));
    }

    #[test]
    fn early_alert_goes_to_upcoming_unit() {
        let schedule = [window(100, 200)];
        let policy = MatchPolicy {
            grace_before_start: 20,
            ..MatchPolicy::default()
        };
        let r = classify("R", &[ep(90)], &schedule, &policy).unwrap();
        assert_eq!(r.ttd_values, [-10]);
        assert_eq!(r, classify_bruteforce("R", &[ep(90)], &schedule, &policy));
    }

    #[test]
    fn median() {
        let mut r = classify("R", &[], &[], &MatchPolicy::default()).unwrap();
        r.ttd_values = vec![30, 10, 20];
        assert_eq!(r.median_ttd(), Some(20.0));
        r.ttd_values = vec![10, 20];
        assert_eq!(r.median_ttd(), Some(15.0));
    }

    #[test]
    fn json_marks_undefined() {
        let r = classify("R", &[], &[window(0, 10)], &MatchPolicy::default()).unwrap();
        let json = r.to_json();
        assert!(json.contains("\"precision\": \"undefined\""));
        assert!(json.contains("\"recall\": 0.0"));
        assert!(json.contains("\"fn\": 1"));
        let back: DetectionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
