//! Regularly sampled metric streams and window aggregation.
//!
//! A [`TimeSeries`] holds samples on a fixed scrape grid: timestamps are whole
//! seconds since experiment start, each an integer multiple of the scrape
//! interval, with consecutive samples exactly one interval apart.
//!
//! Window aggregation uses the half-open interval `(t - window, t]` and the
//! arithmetic mean of whatever samples fall inside it. Partial windows at the
//! start of a series are averaged over the samples present. Means are computed
//! exactly (see [`exact`]) and rounded once.

pub mod csv;
pub mod exact;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::exact::ExactPrefix;

/// Seconds since experiment start.
pub type Seconds = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("scrape interval must be positive")]
    NonPositiveInterval,
    #[error("invalid series name {0:?}")]
    InvalidName(String),
    #[error("sample {index}: value {value} is not finite")]
    NonFinite { index: usize, value: String },
    #[error(
        "sample {index}: timestamp {timestamp} is not a multiple of the scrape interval {interval}"
    )]
    OffGrid {
        index: usize,
        timestamp: Seconds,
        interval: Seconds,
    },
    #[error(
        "sample {index}: timestamp {timestamp} does not follow {previous} by exactly {interval}s"
    )]
    Irregular {
        index: usize,
        previous: Seconds,
        timestamp: Seconds,
        interval: Seconds,
    },
    #[error("sample {index}: ratio value {value} outside [0, 1]")]
    RatioOutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub timestamp: Seconds,
    pub value: f64,
}

impl MetricSample {
    pub fn new(timestamp: Seconds, value: f64) -> Self {
        Self { timestamp, value }
    }
}

/// Whether a series holds a ratio (bounded to `[0, 1]`) or an unbounded gauge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    #[default]
    Gauge,
    Ratio,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    labels: BTreeMap<String, String>,
    kind: SeriesKind,
    scrape_interval: Seconds,
    samples: Vec<MetricSample>,
}

impl TimeSeries {
    /// Validates grid regularity and finiteness.
    pub fn new(
        name: impl Into<String>,
        scrape_interval: Seconds,
        samples: Vec<MetricSample>,
    ) -> Result<Self, SeriesError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(SeriesError::InvalidName(name));
        }
        if scrape_interval == 0 {
            return Err(SeriesError::NonPositiveInterval);
        }
        for (index, sample) in samples.iter().enumerate() {
            if !sample.value.is_finite() {
                return Err(SeriesError::NonFinite {
                    index,
                    value: sample.value.to_string(),
                });
            }
            if sample.timestamp % scrape_interval != 0 {
                return Err(SeriesError::OffGrid {
                    index,
                    timestamp: sample.timestamp,
                    interval: scrape_interval,
                });
            }
            if index > 0 {
                let previous = samples[index - 1].timestamp;
                if sample.timestamp != previous + scrape_interval {
                    return Err(SeriesError::Irregular {
                        index,
                        previous,
                        timestamp: sample.timestamp,
                        interval: scrape_interval,
                    });
                }
            }
        }
        Ok(Self {
            name,
            labels: BTreeMap::new(),
            kind: SeriesKind::Gauge,
            scrape_interval,
            samples,
        })
    }

    /// Builds a series whose first sample sits at `start`.
    pub fn from_values(
        name: impl Into<String>,
        scrape_interval: Seconds,
        start: Seconds,
        values: impl IntoIterator<Item = f64>,
    ) -> Result<Self, SeriesError> {
        let samples = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| MetricSample::new(start + i as Seconds * scrape_interval, v))
            .collect();
        Self::new(name, scrape_interval, samples)
    }

    pub fn with_labels<K, V>(mut self, labels: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        self.labels = labels
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        self
    }

    /// Marks the series as a ratio, checking every value lies in `[0, 1]`.
    pub fn into_ratio(mut self) -> Result<Self, SeriesError> {
        if let Some((index, s)) = self
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(&s.value))
        {
            return Err(SeriesError::RatioOutOfRange {
                index,
                value: s.value,
            });
        }
        self.kind = SeriesKind::Ratio;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn scrape_interval(&self) -> Seconds {
        self.scrape_interval
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<Seconds> {
        self.samples.first().map(|s| s.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<Seconds> {
        self.samples.last().map(|s| s.timestamp)
    }

    /// Value of the sample stamped exactly `t`, if any.
    pub fn value_at(&self, t: Seconds) -> Option<f64> {
        self.samples
            .binary_search_by_key(&t, |s| s.timestamp)
            .ok()
            .map(|i| self.samples[i].value)
    }

    /// Index range of samples with timestamp in `(t - window, t]`.
    pub fn window_indices(&self, t: Seconds, window: Seconds) -> (usize, usize) {
        let hi = self.samples.partition_point(|s| s.timestamp <= t);
        let lo = match t.checked_sub(window) {
            Some(floor) => self.samples.partition_point(|s| s.timestamp <= floor),
            None => 0,
        };
        (lo, hi.max(lo))
    }

    /// Mean of the samples in `(t - window, t]`, or `None` when the interval
    /// holds no sample. `window` must be positive.
    pub fn window_average(&self, t: Seconds, window: Seconds) -> Option<f64> {
        assert!(window > 0, "window must be positive");
        let (lo, hi) = self.window_indices(t, window);
        let values: Vec<f64> = self.samples[lo..hi].iter().map(|s| s.value).collect();
        exact::exact_mean(&values)
    }

    /// Sub-series with timestamps in `[t_start, t_end]`.
    pub fn slice(&self, t_start: Seconds, t_end: Seconds) -> TimeSeries {
        let lo = self.samples.partition_point(|s| s.timestamp < t_start);
        let hi = self
            .samples
            .partition_point(|s| s.timestamp <= t_end)
            .max(lo);
        TimeSeries {
            name: self.name.clone(),
            labels: self.labels.clone(),
            kind: self.kind,
            scrape_interval: self.scrape_interval,
            samples: self.samples[lo..hi].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> TimeSeries {
        TimeSeries::from_values("errorRate", 5, 0, values.iter().copied()).unwrap()
    }

    #[test]
    fn constant_series_average() {
        let s = series(&[0.05; 100]);
        for t in (0..500).step_by(5) {
            assert_eq!(s.window_average(t, 90), Some(0.05));
        }
        assert_eq!(s.window_average(3, 90), Some(0.05));
    }

    #[test]
    fn before_first_sample_is_empty() {
        let s = TimeSeries::from_values("x", 5, 100, [1.0, 2.0]).unwrap();
        assert_eq!(s.window_average(95, 90), None);
        assert_eq!(s.window_average(0, 90), None);
        // window ends before the series starts
        assert_eq!(s.window_average(300, 90), None);
    }

    #[test]
    fn half_open_window() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        // (5, 15] holds samples at 10 and 15
        assert_eq!(s.window_average(15, 10), Some(3.5));
        assert_eq!(s.window_average(15, 5), Some(4.0));
    }

    #[test]
    fn partial_window_uses_present_samples() {
        let s = series(&[1.0, 3.0, 5.0]);
        assert_eq!(s.window_average(5, 90), Some(2.0));
    }

    #[test]
    fn rejects_irregular_grid() {
        let err = TimeSeries::new(
            "x",
            5,
            vec![MetricSample::new(0, 0.0), MetricSample::new(10, 0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, SeriesError::Irregular { index: 1, .. }));
        let err = TimeSeries::new("x", 5, vec![MetricSample::new(3, 0.0)]).unwrap_err();
        assert!(matches!(err, SeriesError::OffGrid { .. }));
        let err = TimeSeries::new(
            "x",
            5,
            vec![MetricSample::new(10, 0.0), MetricSample::new(5, 0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, SeriesError::Irregular { .. }));
    }

    #[test]
    fn rejects_non_finite_and_bad_names() {
        assert!(matches!(
            series_err(&[f64::NAN]),
            SeriesError::NonFinite { index: 0, .. }
        ));
        assert!(matches!(
            TimeSeries::new("9x", 5, vec![]).unwrap_err(),
            SeriesError::InvalidName(_)
        ));
        assert_eq!(
            TimeSeries::new("x", 0, vec![]).unwrap_err(),
            SeriesError::NonPositiveInterval
        );
    }

    fn series_err(values: &[f64]) -> SeriesError {
        TimeSeries::from_values("x", 5, 0, values.iter().copied()).unwrap_err()
    }

    #[test]
    fn ratio_bounds() {
        assert!(series(&[0.0, 1.0]).into_ratio().is_ok());
        assert!(matches!(
            series(&[0.5, 1.5]).into_ratio().unwrap_err(),
            SeriesError::RatioOutOfRange { index: 1, .. }
        ));
    }

    #[test]
    fn slice_edges() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.slice(0, 15), s);
        assert_eq!(s.slice(5, 5).len(), 1);
        assert_eq!(s.slice(6, 6).len(), 0);
        assert_eq!(s.slice(7, 12).samples(), &[MetricSample::new(10, 3.0)]);
        let empty = TimeSeries::new("x", 5, vec![]).unwrap();
        assert!(empty.slice(0, 100).is_empty());
        let labelled = s.clone().with_labels([("service", "frontend")]);
        assert_eq!(labelled.slice(0, 5).labels(), labelled.labels());
    }
}
