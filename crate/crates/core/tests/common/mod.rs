//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use alertlab::evaluator::AlertEvent;
use alertlab::matcher::{Granularity, MatchPolicy};
use alertlab::sim::FaultWindow;
use alertlab::timeseries::{Seconds, TimeSeries};
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;

pub fn reference_spec() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs/reference.toml")
}

/// Exact window mean by direct summation over every sample.
pub fn brute_mean(series: &TimeSeries, t: Seconds, window: Seconds) -> Option<BigRational> {
    let mut sum = BigRational::zero();
    let mut n = 0u32;
    for s in series.samples() {
        if s.timestamp + window > t && s.timestamp <= t {
            sum += BigRational::from_float(s.value).expect("finite");
            n += 1;
        }
    }
    (n > 0).then(|| sum / BigRational::from_integer(n.into()))
}

/// First grid step at which the window mean strictly exceeds `threshold`.
pub fn brute_first_above(
    series: &TimeSeries,
    window: Seconds,
    threshold: f64,
    t_end: Seconds,
) -> Option<Seconds> {
    let tau = BigRational::from_float(threshold).expect("finite");
    let step = series.scrape_interval();
    (0..=t_end / step)
        .map(|k| k * step)
        .find(|&t| brute_mean(series, t, window).is_some_and(|m| m > tau))
}

/// Random ratio series on a 5 s grid: a noisy baseline with a few bursts.
pub fn random_series(rng: &mut impl Rng, len: usize) -> TimeSeries {
    let base = rng.gen_range(0.0..0.03);
    let mut values = Vec::with_capacity(len);
    let mut burst = 0usize;
    for _ in 0..len {
        if burst == 0 && rng.gen_bool(0.05) {
            burst = rng.gen_range(1..30);
        }
        let level = if burst > 0 {
            burst -= 1;
            rng.gen_range(0.02..0.1)
        } else {
            base
        };
        values.push((level + rng.gen_range(-0.01..0.01f64)).clamp(0.0, 1.0));
    }
    TimeSeries::from_values("errorRate", 5, 0, values).unwrap()
}

pub fn random_policy(rng: &mut impl Rng) -> MatchPolicy {
    MatchPolicy {
        grace_after_end: rng.gen_range(0..=60),
        grace_before_start: rng.gen_range(0..=30),
        granularity: if rng.gen_bool(0.5) {
            Granularity::Pattern
        } else {
            Granularity::Phase
        },
        pattern_merge_gap: rng.gen_range(1..=150),
    }
}

/// Sorted, non-overlapping schedule of up to `max` windows.
pub fn random_schedule(rng: &mut impl Rng, max: usize) -> Vec<FaultWindow> {
    let n = rng.gen_range(0..=max);
    let mut t = rng.gen_range(0..100);
    (0..n)
        .map(|_| {
            let start = t + rng.gen_range(0..200);
            let end = start + rng.gen_range(1..120);
            t = end;
            FaultWindow::new("packet_loss", start, end, rng.gen_range(0.0..=1.0))
        })
        .collect()
}

/// Up to `max` episodes sorted by `fired_at`, spanning `[0, horizon)`.
pub fn random_episodes(rng: &mut impl Rng, max: usize, horizon: Seconds) -> Vec<AlertEvent> {
    let n = rng.gen_range(0..=max);
    let mut fired: Vec<Seconds> = (0..n).map(|_| rng.gen_range(0..horizon.max(1))).collect();
    fired.sort_unstable();
    fired
        .into_iter()
        .map(|f| AlertEvent {
            rule_name: "R".into(),
            pending_since: f.saturating_sub(rng.gen_range(0..60)),
            fired_at: f,
            resolved_at: rng.gen_bool(0.8).then(|| f + rng.gen_range(1..100)),
        })
        .collect()
}

/// Every file under `dir` as (relative path, bytes), sorted by path.
pub fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
