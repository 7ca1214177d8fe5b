//! Fault windows, repeated fault patterns, and the schedule CSV format
//! (`treatment,start,end,magnitude`).

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::csv::{format_value, parse_decimal, CsvError};
use crate::timeseries::{is_identifier, Seconds};

/// One injected degradation over the half-open interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultWindow {
    pub treatment: String,
    pub start: Seconds,
    pub end: Seconds,
    /// Packet-loss probability in `[0, 1]`.
    pub magnitude: f64,
}

impl FaultWindow {
    pub fn new(treatment: impl Into<String>, start: Seconds, end: Seconds, magnitude: f64) -> Self {
        Self {
            treatment: treatment.into(),
            start,
            end,
            magnitude,
        }
    }

    pub fn contains(&self, t: Seconds) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration(&self) -> Seconds {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("window {index}: start {start} is not before end {end}")]
    EmptyWindow {
        index: usize,
        start: Seconds,
        end: Seconds,
    },
    #[error("window {index}: magnitude {magnitude} outside [0, 1]")]
    Magnitude { index: usize, magnitude: f64 },
    #[error(
        "window {index}: starts at {start}, before the previous window ends at {previous_end}"
    )]
    ScheduleOverlap {
        index: usize,
        start: Seconds,
        previous_end: Seconds,
    },
    #[error("window {index}: invalid treatment name {name:?}")]
    Treatment { index: usize, name: String },
}

impl ScheduleError {
    pub fn index(&self) -> usize {
        match self {
            ScheduleError::EmptyWindow { index, .. }
            | ScheduleError::Magnitude { index, .. }
            | ScheduleError::ScheduleOverlap { index, .. }
            | ScheduleError::Treatment { index, .. } => *index,
        }
    }
}

/// Checks that windows are well-formed, sorted and non-overlapping.
/// Abutting windows (`prev.end == next.start`) are allowed.
pub fn validate_schedule(windows: &[FaultWindow]) -> Result<(), ScheduleError> {
    for (index, w) in windows.iter().enumerate() {
        if !is_identifier(&w.treatment) {
            return Err(ScheduleError::Treatment {
                index,
                name: w.treatment.clone(),
            });
        }
        if w.start >= w.end {
            return Err(ScheduleError::EmptyWindow {
                index,
                start: w.start,
                end: w.end,
            });
        }
        if !(0.0..=1.0).contains(&w.magnitude) {
            return Err(ScheduleError::Magnitude {
                index,
                magnitude: w.magnitude,
            });
        }
        if index > 0 && w.start < windows[index - 1].end {
            return Err(ScheduleError::ScheduleOverlap {
                index,
                start: w.start,
                previous_end: windows[index - 1].end,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub duration: Seconds,
    pub magnitude: f64,
}

/// A sequence of fault phases, repeated with a cooldown between repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultPatternSpec {
    pub treatment: String,
    pub phases: Vec<Phase>,
    pub inter_phase_gap: Seconds,
    pub repetitions: u32,
    pub cooldown: Seconds,
    pub first_start: Seconds,
}

impl Default for FaultPatternSpec {
    /// Three one-minute packet-loss phases of rising severity, peaking at
    /// 25%, repeated six times.
    fn default() -> Self {
        Self {
            treatment: "packet_loss".into(),
            phases: vec![
                Phase {
                    duration: 60,
                    magnitude: 0.10,
                },
                Phase {
                    duration: 60,
                    magnitude: 0.18,
                },
                Phase {
                    duration: 60,
                    magnitude: 0.25,
                },
            ],
            inter_phase_gap: 60,
            repetitions: 6,
            cooldown: 240,
            first_start: 120,
        }
    }
}

impl FaultPatternSpec {
    /// Validation messages keyed by field name.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !is_identifier(&self.treatment) {
            out.push((
                "treatment".into(),
                format!("invalid treatment name {:?}", self.treatment),
            ));
        }
        if self.phases.is_empty() {
            out.push(("phases".into(), "at least one phase is required".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.duration == 0 {
                out.push((format!("phases[{i}].duration"), "must be positive".into()));
            }
            if !(0.0..=1.0).contains(&p.magnitude) {
                out.push((
                    format!("phases[{i}].magnitude"),
                    format!("{} outside [0, 1]", p.magnitude),
                ));
            }
        }
        if self.repetitions == 0 {
            out.push(("repetitions".into(), "must be at least 1".into()));
        }
        out
    }

    /// Length of one repetition, from first phase start to last phase end.
    pub fn repetition_length(&self) -> Seconds {
        let phases: Seconds = self.phases.iter().map(|p| p.duration).sum();
        phases + self.inter_phase_gap * self.phases.len().saturating_sub(1) as Seconds
    }

    /// End of the last window.
    pub fn end(&self) -> Seconds {
        let reps = Seconds::from(self.repetitions);
        if reps == 0 {
            return self.first_start;
        }
        self.first_start + reps * self.repetition_length() + (reps - 1) * self.cooldown
    }
}

/// Expands a pattern into its sorted, non-overlapping fault windows.
pub fn build_fault_schedule(pattern: &FaultPatternSpec) -> Vec<FaultWindow> {
    let mut out = Vec::with_capacity(pattern.phases.len() * pattern.repetitions as usize);
    let mut rep_start = pattern.first_start;
    for _ in 0..pattern.repetitions {
        let mut start = rep_start;
        for (i, phase) in pattern.phases.iter().enumerate() {
            if i > 0 {
                start += pattern.inter_phase_gap;
            }
            out.push(FaultWindow::new(
                pattern.treatment.clone(),
                start,
                start + phase.duration,
                phase.magnitude,
            ));
            start += phase.duration;
        }
        rep_start = start + pattern.cooldown;
    }
    out
}

pub const SCHEDULE_CSV_HEADER: &str = "treatment,start,end,magnitude";

pub fn write_schedule<W: Write>(windows: &[FaultWindow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SCHEDULE_CSV_HEADER}")?;
    for w in windows {
        writeln!(
            out,
            "{},{},{},{}",
            w.treatment,
            w.start,
            w.end,
            format_value(w.magnitude)
        )?;
    }
    Ok(())
}

pub fn schedule_to_string(windows: &[FaultWindow]) -> String {
    let mut buf = Vec::new();
    write_schedule(windows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("schedule CSV is UTF-8")
}

pub fn read_schedule(text: &str) -> Result<Vec<FaultWindow>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CsvError::parse(1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SCHEDULE_CSV_HEADER {
        return Err(CsvError::parse(
            1,
            format!("expected header `{SCHEDULE_CSV_HEADER}`"),
        ));
    }
    let mut windows = Vec::new();
    let mut lines = Vec::new();
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
        let magnitude = parse_decimal(&record[3]).map_err(|m| CsvError::parse(line, m))?;
        windows.push(FaultWindow::new(&record[0], int(1)?, int(2)?, magnitude));
        lines.push(line);
    }
    validate_schedule(&windows).map_err(|e| CsvError::Schedule {
        line: lines[e.index()],
        source: e,
    })?;
    Ok(windows)
}

pub fn load_fault_schedule_csv(path: impl AsRef<Path>) -> Result<Vec<FaultWindow>, CsvError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CsvError::with_path(path, e))?;
    read_schedule(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_schedule_arithmetic() {
        let pattern = FaultPatternSpec::default();
        let windows = build_fault_schedule(&pattern);
        assert_eq!(windows.len(), 18);
        assert_eq!(pattern.repetition_length(), 300);
        let rep_starts: Vec<Seconds> = windows.iter().step_by(3).map(|w| w.start).collect();
        assert_eq!(rep_starts, [120, 660, 1200, 1740, 2280, 2820]);
        assert_eq!((windows[1].start, windows[1].end), (240, 300));
        assert_eq!(windows[2].end, 420);
        assert_eq!(windows.last().unwrap().end, pattern.end());
        assert_eq!(pattern.end(), 3120);
        assert!(validate_schedule(&windows).is_ok());
    }

    #[test]
    fn single_window() {
        let pattern = FaultPatternSpec {
            phases: vec![Phase {
                duration: 45,
                magnitude: 0.2,
            }],
            repetitions: 1,
            first_start: 10,
            ..Default::default()
        };
        assert_eq!(
            build_fault_schedule(&pattern),
            vec![FaultWindow::new("packet_loss", 10, 55, 0.2)]
        );
    }

    #[test]
    fn zero_gap_abuts() {
        let pattern = FaultPatternSpec {
            inter_phase_gap: 0,
            cooldown: 0,
            ..Default::default()
        };
        let windows = build_fault_schedule(&pattern);
        for pair in windows.windows(2) {
            assert_eq!(pair[0].end, pair[1].start);
        }
        assert!(validate_schedule(&windows).is_ok());
    }

    #[test]
    fn overlap_detected() {
        let windows = vec![
            FaultWindow::new("packet_loss", 0, 60, 0.1),
            FaultWindow::new("packet_loss", 59, 90, 0.1),
        ];
        assert!(matches!(
            validate_schedule(&windows),
            Err(ScheduleError::ScheduleOverlap { index: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let windows = build_fault_schedule(&FaultPatternSpec::default());
        let text = schedule_to_string(&windows);
        assert!(text.starts_with("treatment,start,end,magnitude\npacket_loss,120,180,0.1\n"));
        assert_eq!(read_schedule(&text).unwrap(), windows);

        let overlapping =
            "treatment,start,end,magnitude\npacket_loss,0,60,0.1\npacket_loss,30,90,0.2\n";
        match read_schedule(overlapping).unwrap_err() {
            CsvError::Schedule { line, source } => {
                assert_eq!(line, 3);
                assert!(matches!(source, ScheduleError::ScheduleOverlap { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "treatment,start,end,magnitude\npacket_loss,0,x,0.1\n";
        assert!(matches!(
            read_schedule(bad).unwrap_err(),
            CsvError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            read_schedule("a,b\n").unwrap_err(),
            CsvError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn pattern_problems() {
        let p = FaultPatternSpec {
            phases: vec![Phase {
                duration: 0,
                magnitude: 1.5,
            }],
            repetitions: 0,
            ..Default::default()
        };
        let fields: Vec<String> = p.problems().into_iter().map(|(f, _)| f).collect();
        assert_eq!(
            fields,
            ["phases[0].duration", "phases[0].magnitude", "repetitions"]
        );
    }
}
