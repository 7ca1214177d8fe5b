//! CI assertions over run reports.
//!
//! ```text
//! assertion = term CMP (NUMBER | term) ;
//! term      = METRIC "(" RULE ")" ;
//! METRIC    = recall | precision | episodes | median_ttd | patterns_detected ;
//! CMP       = ">" | ">=" | "<" | "<=" | "==" | "!=" ;
//! ```
//!
//! e.g. `recall(Base90) >= 0.8` or `episodes(For60) < episodes(Base90)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::matcher::DetectionReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertMetric {
    Recall,
    Precision,
    Episodes,
    MedianTtd,
    PatternsDetected,
}

impl AssertMetric {
    pub fn name(self) -> &'static str {
        match self {
            AssertMetric::Recall => "recall",
            AssertMetric::Precision => "precision",
            AssertMetric::Episodes => "episodes",
            AssertMetric::MedianTtd => "median_ttd",
            AssertMetric::PatternsDetected => "patterns_detected",
        }
    }

    /// `None` when the metric is undefined for this report.
    pub fn of(self, report: &DetectionReport) -> Option<f64> {
        match self {
            AssertMetric::Recall => report.recall.value(),
            AssertMetric::Precision => report.precision.value(),
            AssertMetric::Episodes => Some(report.episodes() as f64),
            AssertMetric::MedianTtd => report.median_ttd(),
            AssertMetric::PatternsDetected => Some(report.tp as f64),
        }
    }
}

impl FromStr for AssertMetric {
    type Err = AssertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "recall" => AssertMetric::Recall,
            "precision" => AssertMetric::Precision,
            "episodes" => AssertMetric::Episodes,
            "median_ttd" => AssertMetric::MedianTtd,
            "patterns_detected" => AssertMetric::PatternsDetected,
            other => return Err(AssertError::UnknownMetric(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertCmp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl AssertCmp {
    fn as_str(self) -> &'static str {
        match self {
            AssertCmp::Gt => ">",
            AssertCmp::Ge => ">=",
            AssertCmp::Lt => "<",
            AssertCmp::Le => "<=",
            AssertCmp::Eq => "==",
            AssertCmp::Ne => "!=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            AssertCmp::Gt => a > b,
            AssertCmp::Ge => a >= b,
            AssertCmp::Lt => a < b,
            AssertCmp::Le => a <= b,
            AssertCmp::Eq => a == b,
            AssertCmp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub metric: AssertMetric,
    pub rule: String,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.metric.name(), self.rule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Number(f64),
    Term(Term),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub lhs: Term,
    pub cmp: AssertCmp,
    pub rhs: Operand,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssertError {
    #[error("cannot parse assertion {0:?}: expected `metric(rule) CMP number|metric(rule)`")]
    Syntax(String),
    #[error("unknown metric {0:?} (expected recall, precision, episodes, median_ttd or patterns_detected)")]
    UnknownMetric(String),
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
}

fn parse_term(s: &str, whole: &str) -> Result<Term, AssertError> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| AssertError::Syntax(whole.into()))?;
    let inner = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| AssertError::Syntax(whole.into()))?
        .trim();
    let metric: AssertMetric = s[..open].trim().parse()?;
    if inner.is_empty() || !crate::timeseries::is_identifier(inner) {
        return Err(AssertError::Syntax(whole.into()));
    }
    Ok(Term {
        metric,
        rule: inner.to_string(),
    })
}

impl FromStr for Assertion {
    type Err = AssertError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        const OPS: [(&str, AssertCmp); 6] = [
            (">=", AssertCmp::Ge),
            ("<=", AssertCmp::Le),
            ("==", AssertCmp::Eq),
            ("!=", AssertCmp::Ne),
            (">", AssertCmp::Gt),
            ("<", AssertCmp::Lt),
        ];
        let (pos, op, cmp) = OPS
            .iter()
            .filter_map(|(op, cmp)| text.find(op).map(|p| (p, *op, *cmp)))
            .min_by_key(|(p, op, _)| (*p, std::cmp::Reverse(op.len())))
            .ok_or_else(|| AssertError::Syntax(text.into()))?;
        let lhs = parse_term(&text[..pos], text)?;
        let rest = text[pos + op.len()..].trim();
        let rhs = match rest.parse::<f64>() {
            Ok(v) if v.is_finite() => Operand::Number(v),
            Ok(_) => return Err(AssertError::Syntax(text.into())),
            Err(_) => Operand::Term(parse_term(rest, text)?),
        };
        Ok(Assertion {
            lhs,
            cmp,
            rhs,
            text: text.trim().to_string(),
        })
    }
}

/// Outcome of checking one assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v}"))
}

impl Assertion {
    /// Checks the assertion; undefined values never satisfy it.
    pub fn check(&self, reports: &[DetectionReport]) -> Result<Outcome, AssertError> {
        let lookup = |t: &Term| {
            reports
                .iter()
                .find(|r| r.rule_name == t.rule)
                .map(|r| t.metric.of(r))
                .ok_or_else(|| AssertError::UnknownRule(t.rule.clone()))
        };
        let a = lookup(&self.lhs)?;
        let (b, rhs_text) = match &self.rhs {
            Operand::Number(v) => (Some(*v), format!("{v}")),
            Operand::Term(t) => {
                let v = lookup(t)?;
                (v, format!("{t} = {}", show(v)))
            }
        };
        let passed = matches!((a, b), (Some(a), Some(b)) if self.cmp.holds(a, b));
        Ok(Outcome {
            passed,
            detail: format!(
                "{} = {} {} {}",
                self.lhs,
                show(a),
                self.cmp.as_str(),
                rhs_text
            ),
        })
    }
}
