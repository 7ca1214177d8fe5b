//! Alert rule documents: parsing, canonical formatting and linting.
//!
//! A rule document is a handful of `key: value` lines:
//!
//! ```text
//! alert: HighErrorRate
//! expr: errorRate[90s] > 0.03
//! for: 60s
//! ```
//!
//! Grammar (whitespace is allowed between any two tokens; lines may appear in
//! any order, each at most once; blank lines and `#` comments are ignored):
//!
//! ```text
//! document   = { line } ;
//! line       = alert_line | expr_line | for_line | labels_line ;
//! alert_line = "alert" ":" IDENT ;
//! expr_line  = "expr" ":" IDENT "[" duration "]" comparator NUMBER ;
//! for_line   = "for" ":" duration ;
//! labels_line= "labels" ":" [ label { "," label } ] ;
//! label      = IDENT "=" '"' { CHAR } '"' ;
//! duration   = DIGITS unit ;
//! unit       = "s" | "m" ;                  (* m = 60 s *)
//! comparator = ">" | ">=" | "<" | "<=" ;
//! IDENT      = [A-Za-z_] { [A-Za-z0-9_] } ;
//! ```
//!
//! `alert` and `expr` are required. Durations always carry a unit; a bare
//! integer is rejected. A rule file holds several documents separated by a
//! line containing only `---`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{is_identifier, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
        }
    }

    /// Whether `ord`, the ordering of the observed value relative to the
    /// threshold, satisfies this comparator.
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Gt => ord == Greater,
            Comparator::Ge => ord != Less,
            Comparator::Lt => ord == Less,
            Comparator::Le => ord != Greater,
        }
    }

    pub fn compare(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }

    pub const ALL: [Comparator; 4] = [
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Lt,
        Comparator::Le,
    ];
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub name: String,
    pub metric: String,
    /// Range window in seconds.
    pub window: Seconds,
    pub comparator: Comparator,
    pub threshold: f64,
    /// Seconds the condition must hold before firing; 0 fires immediately.
    pub for_duration: Seconds,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl AlertRule {
    pub fn new(
        name: impl Into<String>,
        metric: impl Into<String>,
        window: Seconds,
        comparator: Comparator,
        threshold: f64,
        for_duration: Seconds,
    ) -> Self {
        Self {
            name: name.into(),
            metric: metric.into(),
            window,
            comparator,
            threshold,
            for_duration,
            labels: BTreeMap::new(),
        }
    }

    /// Checks the invariants a parsed rule always satisfies.
    pub fn validate(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("invalid rule name {:?}", self.name));
        }
        if !is_identifier(&self.metric) {
            return Err(format!("invalid metric name {:?}", self.metric));
        }
        if self.window == 0 {
            return Err("window must be positive".into());
        }
        if !self.threshold.is_finite() {
            return Err("threshold must be finite".into());
        }
        for k in self.labels.keys() {
            if !is_identifier(k) {
                return Err(format!("invalid label name {k:?}"));
            }
        }
        Ok(())
    }

    /// The `expr:` body, e.g. `errorRate[90s] > 0.03`.
    pub fn expr(&self) -> String {
        format!(
            "{}[{}s] {} {}",
            self.metric, self.window, self.comparator, self.threshold
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleErrorKind {
    Syntax,
    Value,
}

/// A parse failure with a 1-based position in the document.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{kind:?} error at {line}:{column}: {message}")]
pub struct RuleError {
    pub kind: RuleErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl RuleError {
    fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            kind: RuleErrorKind::Syntax,
            line,
            column,
            message: message.into(),
        }
    }

    fn value(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            kind: RuleErrorKind::Value,
            line,
            column,
            message: message.into(),
        }
    }
}

/// Character cursor over one line, tracking 1-based columns.
struct Cursor<'a> {
    line_no: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line_no: usize, text: &'a str, pos: usize) -> Self {
        Self { line_no, text, pos }
    }

    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        let len: usize = self
            .rest()
            .chars()
            .take_while(|c| f(*c))
            .map(char::len_utf8)
            .sum();
        self.pos += len;
        &self.text[start..self.pos]
    }

    fn syntax(&self, message: impl Into<String>) -> RuleError {
        RuleError::syntax(self.line_no, self.column(), message)
    }

    fn value_at(&self, column: usize, message: impl Into<String>) -> RuleError {
        RuleError::value(self.line_no, column, message)
    }

    fn ident(&mut self, what: &str) -> Result<&'a str, RuleError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.syntax(format!("expected {what}"))),
        }
        Ok(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
    }

    fn duration(&mut self) -> Result<Seconds, RuleError> {
        self.skip_ws();
        let column = self.column();
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return Err(self.syntax("expected a duration such as 90s or 2m"));
        }
        self.skip_ws();
        let unit = self.take_while(|c| c.is_alphabetic());
        let multiplier = match unit {
            "s" => 1,
            "m" => 60,
            "" => return Err(self.syntax(format!("duration {digits} needs a unit (s or m)"))),
            other => return Err(self.value_at(column, format!("unknown unit {other:?}"))),
        };
        digits
            .parse::<Seconds>()
            .ok()
            .and_then(|n| n.checked_mul(multiplier))
            .ok_or_else(|| self.value_at(column, format!("duration {digits}{unit} is too large")))
    }

    fn end(&mut self) -> Result<(), RuleError> {
        self.skip_ws();
        if self.rest().is_empty() {
            Ok(())
        } else {
            Err(self.syntax(format!("unexpected trailing input {:?}", self.rest())))
        }
    }
}

#[derive(Default)]
struct Fields {
    name: Option<String>,
    expr: Option<(String, Seconds, Comparator, f64)>,
    for_duration: Option<Seconds>,
    labels: Option<BTreeMap<String, String>>,
}

fn parse_expr(cur: &mut Cursor<'_>) -> Result<(String, Seconds, Comparator, f64), RuleError> {
    let metric = cur.ident("metric name")?.to_string();
    cur.skip_ws();
    if !cur.eat('[') {
        return Err(cur.syntax("expected '[' to open the range window"));
    }
    let window_column = {
        cur.skip_ws();
        cur.column()
    };
    let window = cur.duration()?;
    if window == 0 {
        return Err(cur.value_at(window_column, "window must be positive"));
    }
    cur.skip_ws();
    if !cur.eat(']') {
        return Err(cur.syntax("expected ']' to close the range window"));
    }
    cur.skip_ws();
    let comparator = if cur.eat('>') {
        if cur.eat('=') {
            Comparator::Ge
        } else {
            Comparator::Gt
        }
    } else if cur.eat('<') {
        if cur.eat('=') {
            Comparator::Le
        } else {
            Comparator::Lt
        }
    } else {
        return Err(cur.syntax("expected a comparator (>, >=, <, <=)"));
    };
    cur.skip_ws();
    let column = cur.column();
    let token = cur.take_while(|c| !c.is_whitespace());
    if token.is_empty() {
        return Err(cur.syntax("expected a threshold"));
    }
    let threshold: f64 = token
        .parse()
        .map_err(|_| RuleError::syntax(cur.line_no, column, format!("invalid number {token:?}")))?;
    if !threshold.is_finite() {
        return Err(cur.value_at(column, "threshold must be finite"));
    }
    cur.end()?;
    Ok((metric, window, comparator, threshold))
}

fn parse_labels(cur: &mut Cursor<'_>) -> Result<BTreeMap<String, String>, RuleError> {
    let mut labels = BTreeMap::new();
    cur.skip_ws();
    if cur.rest().is_empty() {
        return Ok(labels);
    }
    loop {
        let key = cur.ident("label name")?.to_string();
        cur.skip_ws();
        if !cur.eat('=') {
            return Err(cur.syntax("expected '=' after label name"));
        }
        cur.skip_ws();
        if !cur.eat('"') {
            return Err(cur.syntax("expected '\"' to open label value"));
        }
        let mut value = String::new();
        loop {
            match cur.peek() {
                None => return Err(cur.syntax("unterminated label value")),
                Some('"') => {
                    cur.eat('"');
                    break;
                }
                Some('\\') => {
                    cur.eat('\\');
                    match cur.peek() {
                        Some(c @ ('"' | '\\')) => {
                            cur.eat(c);
                            value.push(c);
                        }
                        _ => return Err(cur.syntax("invalid escape in label value")),
                    }
                }
                Some(c) => {
                    cur.eat(c);
                    value.push(c);
                }
            }
        }
        if labels.contains_key(&key) {
            return Err(cur.syntax(format!("duplicate label {key}")));
        }
        labels.insert(key, value);
        cur.skip_ws();
        if cur.rest().is_empty() {
            return Ok(labels);
        }
        if !cur.eat(',') {
            return Err(cur.syntax("expected ',' between labels"));
        }
    }
}

/// Parses a single rule document.
pub fn parse_rule(text: &str) -> Result<AlertRule, RuleError> {
    parse_rule_at(text, 1)
}

/// Parses a rule document whose first line is line `first_line` of a
/// larger file, so reported positions are file-absolute.
pub fn parse_rule_at(text: &str, first_line: usize) -> Result<AlertRule, RuleError> {
    let mut fields = Fields::default();
    let mut last_line = first_line;
    for (offset, raw) in text.lines().enumerate() {
        let line_no = first_line + offset;
        last_line = line_no;
        let mut cur = Cursor::new(line_no, raw, 0);
        cur.skip_ws();
        if cur.rest().is_empty() || cur.peek() == Some('#') {
            continue;
        }
        let key_column = cur.column();
        let key = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        cur.skip_ws();
        if key.is_empty() || !cur.eat(':') {
            return Err(RuleError::syntax(
                line_no,
                key_column,
                "expected `key: value` (alert, expr, for or labels)",
            ));
        }
        let duplicate =
            || RuleError::syntax(line_no, key_column, format!("duplicate `{key}:` line"));
        match key {
            "alert" => {
                if fields.name.is_some() {
                    return Err(duplicate());
                }
                let name = cur.ident("alert name")?.to_string();
                cur.end()?;
                fields.name = Some(name);
            }
            "expr" => {
                if fields.expr.is_some() {
                    return Err(duplicate());
                }
                fields.expr = Some(parse_expr(&mut cur)?);
            }
            "for" => {
                if fields.for_duration.is_some() {
                    return Err(duplicate());
                }
                let d = cur.duration()?;
                cur.end()?;
                fields.for_duration = Some(d);
            }
            "labels" => {
                if fields.labels.is_some() {
                    return Err(duplicate());
                }
                fields.labels = Some(parse_labels(&mut cur)?);
            }
            other => {
                return Err(RuleError::syntax(
                    line_no,
                    key_column,
                    format!("unknown key `{other}`"),
                ))
            }
        }
    }
    let name = fields
        .name
        .ok_or_else(|| RuleError::syntax(last_line, 1, "missing `alert:` line"))?;
    let (metric, window, comparator, threshold) = fields
        .expr
        .ok_or_else(|| RuleError::syntax(last_line, 1, "missing `expr:` line"))?;
    Ok(AlertRule {
        name,
        metric,
        window,
        comparator,
        threshold,
        for_duration: fields.for_duration.unwrap_or(0),
        labels: fields.labels.unwrap_or_default(),
    })
}

fn escape_label(value: &str) -> String {
    value.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Canonical text for a rule; `parse_rule(&format_rule(r)) == Ok(r)`.
pub fn format_rule(rule: &AlertRule) -> String {
    let mut out = format!("alert: {}\nexpr: {}\n", rule.name, rule.expr());
    if rule.for_duration > 0 {
        out.push_str(&format!("for: {}s\n", rule.for_duration));
    }
    if !rule.labels.is_empty() {
        let labels: Vec<String> = rule
            .labels
            .iter()
            .map(|(k, v)| format!("{k}=\"{}\"", escape_label(v)))
            .collect();
        out.push_str(&format!("labels: {}\n", labels.join(", ")));
    }
    out
}

/// One document of a multi-document rule file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDocument<'a> {
    /// Line number of the document's first line within the file.
    pub first_line: usize,
    pub text: &'a str,
}

/// Splits a rule file on lines consisting only of `---`. Empty documents
/// (e.g. from a leading or trailing separator) are dropped.
pub fn split_documents(text: &str) -> Vec<RuleDocument<'_>> {
    let mut docs = Vec::new();
    let mut start = 0;
    let mut first_line = 1;
    let mut offset = 0;
    let mut push = |start: usize, end: usize, first_line: usize| {
        let body = &text[start..end];
        if !body.trim().is_empty() {
            docs.push(RuleDocument {
                first_line,
                text: body,
            });
        }
    };
    for (line_no, line) in (1..).zip(text.split_inclusive('\n')) {
        if line.trim_end_matches(['\n', '\r']).trim() == "---" {
            push(start, offset, first_line);
            start = offset + line.len();
            first_line = line_no + 1;
        }
        offset += line.len();
    }
    push(start, text.len(), first_line);
    docs
}

/// Parses every document of a rule file, failing on the first error.
pub fn parse_rule_file(text: &str) -> Result<Vec<AlertRule>, RuleError> {
    split_documents(text)
        .into_iter()
        .map(|d| parse_rule_at(d.text, d.first_line))
        .collect()
}

/// Joins rules into a multi-document rule file.
pub fn format_rule_file(rules: &[AlertRule]) -> String {
    rules
        .iter()
        .map(format_rule)
        .collect::<Vec<_>>()
        .join("---\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Zero-based index of the document in the input set.
    pub document: usize,
    pub severity: Severity,
    pub line: usize,
    pub column: usize,
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(
            f,
            "{}:{}: {sev}[{}]: {}",
            self.line, self.column, self.code, self.message
        )
    }
}

/// Metrics whose values are ratios in `[0, 1]`.
pub const DEFAULT_RATIO_METRICS: &[&str] = &["errorRate"];

/// Lints a set of rule documents. Positions are taken from each document's
/// `first_line`.
pub fn lint_documents(docs: &[RuleDocument<'_>], ratio_metrics: &[&str]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (index, doc) in docs.iter().enumerate() {
        let rule = match parse_rule_at(doc.text, doc.first_line) {
            Ok(rule) => rule,
            Err(e) => {
                out.push(Diagnostic {
                    document: index,
                    severity: Severity::Error,
                    line: e.line,
                    column: e.column,
                    code: match e.kind {
                        RuleErrorKind::Syntax => "syntax",
                        RuleErrorKind::Value => "value",
                    },
                    message: e.message,
                });
                continue;
            }
        };
        let line_of = |key: &str| {
            doc.text
                .lines()
                .position(|l| l.trim_start().starts_with(key))
                .map(|p| doc.first_line + p)
                .unwrap_or(doc.first_line)
        };
        if let Some(first) = seen.get(&rule.name) {
            out.push(Diagnostic {
                document: index,
                severity: Severity::Error,
                line: line_of("alert"),
                column: 1,
                code: "duplicate-name",
                message: format!("rule name {} already used by document {}", rule.name, first),
            });
        } else {
            seen.insert(rule.name.clone(), index);
        }
        if ratio_metrics.contains(&rule.metric.as_str()) && !(0.0..=1.0).contains(&rule.threshold) {
            out.push(Diagnostic {
                document: index,
                severity: Severity::Warning,
                line: line_of("expr"),
                column: 1,
                code: "ratio-threshold",
                message: format!(
                    "threshold {} on ratio metric {} lies outside [0, 1]",
                    rule.threshold, rule.metric
                ),
            });
        }
    }
    out
}

/// Lints standalone rule documents, each numbered from line 1.
pub fn lint_rules<S: AsRef<str>>(documents: &[S], ratio_metrics: &[&str]) -> Vec<Diagnostic> {
    let docs: Vec<RuleDocument<'_>> = documents
        .iter()
        .map(|d| RuleDocument {
            first_line: 1,
            text: d.as_ref(),
        })
        .collect();
    lint_documents(&docs, ratio_metrics)
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}
