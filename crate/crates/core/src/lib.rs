//! Alert-rule experimentation.
//!
//! Simulate a service under constant load with scheduled packet-loss faults
//! (or replay recorded metrics), evaluate threshold/window/duration alerting
//! rules over the resulting streams, and score the alerts against the fault
//! schedule: true/false positives, false negatives, precision, recall and
//! time-to-detect.
//!
//! ```
//! use alertlab::{evaluator, rulelang, timeseries::TimeSeries};
//!
//! let rule = rulelang::parse_rule("alert: HighErrorRate\nexpr: errorRate[90s] > 0.03").unwrap();
//! let series = TimeSeries::from_values("errorRate", 5, 0, vec![0.05; 40]).unwrap();
//! let episodes = evaluator::evaluate_rule(&rule, &series, 195).unwrap();
//! assert_eq!(episodes.len(), 1);
//! ```

pub mod cli;
pub mod evaluator;
pub mod experiment;
pub mod matcher;
pub mod rulelang;
pub mod sim;
pub mod timeseries;

pub use evaluator::{evaluate_all, evaluate_rule, AlertEvent};
pub use experiment::{run_batch, run_experiment, ExperimentSpec, RunResult};
pub use matcher::{classify, DetectionReport, MatchPolicy};
pub use rulelang::{format_rule, parse_rule, AlertRule};
pub use timeseries::TimeSeries;
