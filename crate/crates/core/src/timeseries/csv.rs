//! Series CSV files.
//!
//! ```text
//! # series: errorRate{service="frontend"} interval=5 kind=ratio
//! timestamp,value
//! 0,0.005
//! 5,0.004871
//! ```
//!
//! The first line carries the series name, optional labels in braces (values
//! double-quoted, `\"` and `\\` escapes), the scrape interval in seconds and
//! optionally `kind=ratio|gauge` (default gauge). Timestamps are integer
//! seconds; values are decimals with at most 9 fractional digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{MetricSample, SeriesError, SeriesKind, TimeSeries};

pub const SERIES_HEADER_PREFIX: &str = "# series:";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Grid {
        line: usize,
        #[source]
        source: SeriesError,
    },
    #[error("line {line}: {source}")]
    Schedule {
        line: usize,
        #[source]
        source: crate::sim::ScheduleError,
    },
}

impl CsvError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CsvError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn with_path(path: &Path, source: io::Error) -> Self {
        CsvError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Renders a value with at most 9 fractional digits and no trailing zeros.
pub fn format_value(value: f64) -> String {
    let mut s = format!("{value:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Rounds to the 1e-9 grid the CSV format can represent.
pub fn quantize(value: f64) -> f64 {
    let q = (value * 1e9).round() / 1e9;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn escape_label(value: &str) -> String {
    value.replace('\\', "\\\\").replace('"', "\\\"")
}

fn header_line(series: &TimeSeries) -> String {
    let mut out = format!("{SERIES_HEADER_PREFIX} {}", series.name());
    if !series.labels().is_empty() {
        let labels: Vec<String> = series
            .labels()
            .iter()
            .map(|(k, v)| format!("{k}=\"{}\"", escape_label(v)))
            .collect();
        out.push('{');
        out.push_str(&labels.join(","));
        out.push('}');
    }
    out.push_str(&format!(" interval={}", series.scrape_interval()));
    if series.kind() == SeriesKind::Ratio {
        out.push_str(" kind=ratio");
    }
    out
}

pub fn write_series<W: Write>(series: &TimeSeries, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", header_line(series))?;
    writeln!(out, "timestamp,value")?;
    for s in series.samples() {
        writeln!(out, "{},{}", s.timestamp, format_value(s.value))?;
    }
    Ok(())
}

pub fn series_to_string(series: &TimeSeries) -> String {
    let mut buf = Vec::new();
    write_series(series, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("series CSV is ASCII apart from labels")
}

struct Header {
    name: String,
    labels: BTreeMap<String, String>,
    interval: u64,
    kind: SeriesKind,
}

fn parse_labels(body: &str) -> Result<BTreeMap<String, String>, String> {
    let mut labels = BTreeMap::new();
    let mut chars = body.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let key: String = std::iter::from_fn(|| chars.next_if(|c| *c != '=')).collect();
        let key = key.trim().to_string();
        if !super::is_identifier(&key) {
            return Err(format!("invalid label name {key:?}"));
        }
        if chars.next() != Some('=') || chars.next() != Some('"') {
            return Err(format!("label {key} must be written as {key}=\"value\""));
        }
        let mut value = String::new();
        loop {
            match chars.next() {
                Some('\\') => match chars.next() {
                    Some(c @ ('\\' | '"')) => value.push(c),
                    _ => return Err(format!("bad escape in label {key}")),
                },
                Some('"') => break,
                Some(c) => value.push(c),
                None => return Err(format!("unterminated value for label {key}")),
            }
        }
        if labels.insert(key.clone(), value).is_some() {
            return Err(format!("duplicate label {key}"));
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some(',') => continue,
            Some(c) => return Err(format!("unexpected {c:?} after label {key}")),
        }
    }
    Ok(labels)
}

fn parse_header(line: &str) -> Result<Header, String> {
    let rest = line
        .strip_prefix(SERIES_HEADER_PREFIX)
        .ok_or_else(|| format!("expected header line starting with {SERIES_HEADER_PREFIX:?}"))?
        .trim();
    let name_end = rest
        .find(|c: char| c == '{' || c.is_whitespace())
        .unwrap_or(rest.len());
    let name = rest[..name_end].to_string();
    let mut rest = &rest[name_end..];
    let mut labels = BTreeMap::new();
    if let Some(after) = rest.strip_prefix('{') {
        let close = find_label_close(after).ok_or("unterminated label block")?;
        labels = parse_labels(&after[..close])?;
        rest = &after[close + 1..];
    }
    let mut interval = None;
    let mut kind = SeriesKind::Gauge;
    for token in rest.split_whitespace() {
        match token.split_once('=') {
            Some(("interval", v)) => {
                interval = Some(
                    v.parse::<u64>()
                        .map_err(|_| format!("invalid interval {v:?}"))?,
                )
            }
            Some(("kind", "ratio")) => kind = SeriesKind::Ratio,
            Some(("kind", "gauge")) => kind = SeriesKind::Gauge,
            _ => return Err(format!("unexpected header token {token:?}")),
        }
    }
    Ok(Header {
        name,
        labels,
        interval: interval.ok_or("header is missing interval=")?,
        kind,
    })
}

fn find_label_close(s: &str) -> Option<usize> {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '}' if !in_quotes => return Some(i),
            _ => {}
        }
    }
    None
}

/// Parses a series CSV document.
pub fn read_series(text: &str) -> Result<TimeSeries, CsvError> {
    if text.is_empty() {
        return Err(CsvError::parse(1, "empty file"));
    }
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let header = parse_header(first.trim_end()).map_err(|m| CsvError::parse(1, m))?;
    if header.interval == 0 {
        return Err(CsvError::Grid {
            line: 1,
            source: SeriesError::NonPositiveInterval,
        });
    }
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(body.as_bytes());
    let columns = reader
        .headers()
        .map_err(|e| CsvError::parse(2, e.to_string()))?
        .clone();
    if columns.iter().collect::<Vec<_>>() != ["timestamp", "value"] {
        return Err(CsvError::parse(
            2,
            "expected column header `timestamp,value`",
        ));
    }

    let mut samples: Vec<MetricSample> = Vec::new();
    let mut lines_of: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize + 1).unwrap_or(0);
            CsvError::parse(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize + 1)
            .unwrap_or(0);
        if record.len() != 2 {
            return Err(CsvError::parse(line, "expected 2 fields"));
        }
        let timestamp = record[0]
            .parse::<u64>()
            .map_err(|_| CsvError::parse(line, format!("invalid timestamp {:?}", &record[0])))?;
        let value = parse_decimal(&record[1]).map_err(|m| CsvError::parse(line, m))?;
        samples.push(MetricSample::new(timestamp, value));
        lines_of.push(line);
    }

    let line_of = |e: &SeriesError| match e {
        SeriesError::NonFinite { index, .. }
        | SeriesError::OffGrid { index, .. }
        | SeriesError::Irregular { index, .. }
        | SeriesError::RatioOutOfRange { index, .. } => lines_of.get(*index).copied().unwrap_or(0),
        _ => 1,
    };
    let mut series = TimeSeries::new(header.name, header.interval, samples)
        .map_err(|e| CsvError::Grid {
            line: line_of(&e),
            source: e,
        })?
        .with_labels(header.labels);
    if header.kind == SeriesKind::Ratio {
        series = series.into_ratio().map_err(|e| CsvError::Grid {
            line: line_of(&e),
            source: e,
        })?;
    }
    Ok(series)
}

/// Decimal with at most 9 fractional digits; exponents are not accepted.
pub(crate) fn parse_decimal(field: &str) -> Result<f64, String> {
    let bad = || format!("invalid decimal {field:?}");
    let digits = field.strip_prefix('-').unwrap_or(field);
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    if frac.len() > 9 {
        return Err(format!("{field:?} has more than 9 fractional digits"));
    }
    field.parse::<f64>().map_err(|_| bad())
}

pub fn load_series_csv(path: impl AsRef<Path>) -> Result<TimeSeries, CsvError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CsvError::with_path(path, e))?;
    read_series(&text)
}

pub fn save_series_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<(), CsvError> {
    let path = path.as_ref();
    fs::write(path, series_to_string(series)).map_err(|e| CsvError::with_path(path, e))
}
