//! Deterministic stand-in for a service under constant load with scheduled
//! packet-loss faults.
//!
//! Each grid point gets an error rate of
//! `clamp(base + gain * effective_loss(t) + noise, 0, 1)`, where
//! `effective_loss` is the magnitude of the covering fault window scaled by a
//! linear ramp at both window edges. Noise is Gaussian, drawn from a ChaCha8
//! stream seeded by the caller, so identical inputs give identical series.

mod schedule;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::schedule::{
    build_fault_schedule, load_fault_schedule_csv, read_schedule, schedule_to_string,
    validate_schedule, write_schedule, FaultPatternSpec, FaultWindow, Phase, ScheduleError,
    SCHEDULE_CSV_HEADER,
};
pub use crate::timeseries::csv::load_series_csv;

use crate::timeseries::csv::quantize;
use crate::timeseries::{MetricSample, Seconds, TimeSeries};

pub const ERROR_RATE: &str = "errorRate";
pub const REQUEST_RATE: &str = "requestRate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub users: u32,
    pub per_user_rps: f64,
    pub duration: Seconds,
    pub warmup: Seconds,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            users: 800,
            per_user_rps: 0.5,
            duration: 3420,
            warmup: 60,
        }
    }
}

impl WorkloadSpec {
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.users == 0 {
            out.push(("users".into(), "must be positive".into()));
        }
        if !(self.per_user_rps.is_finite() && self.per_user_rps > 0.0) {
            out.push(("per_user_rps".into(), "must be a positive number".into()));
        }
        if self.duration <= self.warmup {
            out.push((
                "duration".into(),
                format!("must exceed warmup ({} <= {})", self.duration, self.warmup),
            ));
        }
        out
    }

    pub fn nominal_rps(&self) -> f64 {
        f64::from(self.users) * self.per_user_rps
    }
}

/// Maps packet loss to request error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModel {
    pub base_error_rate: f64,
    pub loss_to_error_gain: f64,
    pub noise_std: f64,
    /// Seconds of linear onset and decay at each fault window edge.
    pub ramp: Seconds,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            base_error_rate: 0.005,
            loss_to_error_gain: 0.8,
            noise_std: 0.004,
            ramp: 10,
        }
    }
}

impl ErrorModel {
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("base_error_rate", self.base_error_rate),
            ("loss_to_error_gain", self.loss_to_error_gain),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push((
                    name.to_string(),
                    format!("must be a non-negative number, got {v}"),
                ));
            }
        }
        out
    }

    /// Error rate before noise and clamping for a given effective loss.
    pub fn transfer(&self, effective_loss: f64) -> f64 {
        self.base_error_rate + self.loss_to_error_gain * effective_loss
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scrape interval must be positive")]
    NonPositiveInterval,
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("invalid error model: {0}")]
    Model(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Effective packet loss at `t`: the covering window's magnitude scaled by
/// `min(1, (t - start) / ramp, (end - t) / ramp)`, or 0 outside all windows.
pub fn effective_loss(schedule: &[FaultWindow], ramp: Seconds, t: Seconds) -> f64 {
    let idx = schedule.partition_point(|w| w.end <= t);
    match schedule.get(idx) {
        Some(w) if w.contains(t) => {
            if ramp == 0 {
                return w.magnitude;
            }
            let edge = (t - w.start).min(w.end - t) as f64;
            w.magnitude * (edge / ramp as f64).min(1.0)
        }
        _ => 0.0,
    }
}

/// Simulated metric streams plus the schedule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: Vec<TimeSeries>,
    pub schedule: Vec<FaultWindow>,
}

impl Simulation {
    pub fn series(&self, name: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.name() == name)
    }
}

/// Generates `requestRate` and `errorRate` on the grid `0..=duration`.
pub fn simulate(
    workload: &WorkloadSpec,
    schedule: &[FaultWindow],
    model: &ErrorModel,
    scrape_interval: Seconds,
    seed: u64,
) -> Result<Simulation, SimError> {
    if scrape_interval == 0 {
        return Err(SimError::NonPositiveInterval);
    }
    if let Some((field, msg)) = workload.problems().into_iter().next() {
        return Err(SimError::Workload(format!("{field}: {msg}")));
    }
    if let Some((field, msg)) = model.problems().into_iter().next() {
        return Err(SimError::Model(format!("{field}: {msg}")));
    }
    validate_schedule(schedule)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = workload.duration / scrape_interval + 1;
    let nominal = workload.nominal_rps();
    let mut errors = Vec::with_capacity(steps as usize);
    let mut requests = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let t = k * scrape_interval;
        let z_err: f64 = StandardNormal.sample(&mut rng);
        let z_req: f64 = StandardNormal.sample(&mut rng);
        let loss = effective_loss(schedule, model.ramp, t);
        let err = (model.transfer(loss) + model.noise_std * z_err).clamp(0.0, 1.0);
        let req = (nominal * (1.0 + model.noise_std * z_req)).max(0.0);
        errors.push(MetricSample::new(t, quantize(err)));
        requests.push(MetricSample::new(t, quantize(req)));
    }
    let labels = [("service", "frontend")];
    let request_rate = TimeSeries::new(REQUEST_RATE, scrape_interval, requests)
        .expect("simulated grid is regular")
        .with_labels(labels);
    let error_rate = TimeSeries::new(ERROR_RATE, scrape_interval, errors)
        .expect("simulated grid is regular")
        .with_labels(labels)
        .into_ratio()
        .expect("error rate is clamped to [0, 1]");
    Ok(Simulation {
        series: vec![error_rate, request_rate],
        schedule: schedule.to_vec(),
    })
}
