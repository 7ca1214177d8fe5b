//! C ABI for alertlab.
//!
//! Objects are opaque handles created by `*_parse`, `*_load` or `alertlab_run`
//! and released with the matching `*_free`. Every fallible call returns an
//! [`AlertlabStatus`]; on failure `alertlab_last_error` describes what went
//! wrong on the calling thread. Strings handed out by the library are
//! NUL-terminated UTF-8 and must be released with `alertlab_string_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use alertlab::experiment::{self, ExperimentError, ExperimentSpec, RunResult, SpecError};
use alertlab::matcher::DetectionReport;
use alertlab::rulelang::{self, AlertRule, Comparator, Severity};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    IoError = 5,
    RuntimeError = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertlabComparator {
    Gt = 0,
    Ge = 1,
    Lt = 2,
    Le = 3,
}

impl From<Comparator> for AlertlabComparator {
    fn from(c: Comparator) -> Self {
        match c {
            Comparator::Gt => AlertlabComparator::Gt,
            Comparator::Ge => AlertlabComparator::Ge,
            Comparator::Lt => AlertlabComparator::Lt,
            Comparator::Le => AlertlabComparator::Le,
        }
    }
}

/// Numeric fields of a parsed rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertlabRuleInfo {
    pub window_seconds: u64,
    pub for_seconds: u64,
    pub threshold: f64,
    pub comparator: AlertlabComparator,
}

/// Counts from one rule's detection report. `precision` and `recall` are NaN
/// when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertlabReportSummary {
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
    pub duplicate_tp: u64,
    pub episodes: u64,
    pub precision: f64,
    pub recall: f64,
    /// NaN when no unit was detected.
    pub median_ttd: f64,
}

/// A parsed alert rule.
pub struct AlertlabRule(AlertRule);

/// A validated experiment spec.
pub struct AlertlabSpec(ExperimentSpec);

/// The result of running an experiment.
pub struct AlertlabRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AlertlabStatus, String);

impl Failure {
    fn new(status: AlertlabStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        let status = match e {
            SpecError::Io { .. } => AlertlabStatus::IoError,
            SpecError::Parse { .. } => AlertlabStatus::ParseError,
            SpecError::Validation(_) => AlertlabStatus::ValidationError,
        };
        Failure(status, e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Spec(e) => e.into(),
            e if e.is_input_error() => Failure(AlertlabStatus::ValidationError, e.to_string()),
            e => Failure(AlertlabStatus::RuntimeError, e.to_string()),
        }
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AlertlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            AlertlabStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_error(&format!("internal panic: {message}"));
            AlertlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            AlertlabStatus::NullArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            AlertlabStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(AlertlabStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(AlertlabStatus::NullArgument, format!("{what} is null")))
}

fn to_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("NUL bytes replaced")
        .into_raw()
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next alertlab call on the same thread.
#[no_mangle]
pub extern "C" fn alertlab_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn alertlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_parse(
    text: *const c_char,
    out: *mut *mut AlertlabRule,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let rule = rulelang::parse_rule(text)
            .map_err(|e| Failure::new(AlertlabStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(AlertlabRule(rule)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_free(rule: *mut AlertlabRule) {
    free_box(rule);
}

/// Canonical text of the rule.
#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_format(
    rule: *const AlertlabRule,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&rulelang::format_rule(&ref_arg(rule, "rule")?.0));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_name(
    rule: *const AlertlabRule,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&ref_arg(rule, "rule")?.0.name);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_metric(
    rule: *const AlertlabRule,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&ref_arg(rule, "rule")?.0.metric);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_rule_info(
    rule: *const AlertlabRule,
    out: *mut AlertlabRuleInfo,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = &ref_arg(rule, "rule")?.0;
        *out = AlertlabRuleInfo {
            window_seconds: r.window,
            for_seconds: r.for_duration,
            threshold: r.threshold,
            comparator: r.comparator.into(),
        };
        Ok(())
    })
}

/// Lints a `---`-separated rule file held in memory, treating `errorRate`
/// as a ratio metric. Diagnostics are counted, not returned.
#[no_mangle]
pub unsafe extern "C" fn alertlab_lint(
    text: *const c_char,
    errors: *mut usize,
    warnings: *mut usize,
) -> AlertlabStatus {
    guard(|| {
        let errors = out_arg(errors, "errors")?;
        let warnings = out_arg(warnings, "warnings")?;
        let text = str_arg(text, "text")?;
        let docs = rulelang::split_documents(text);
        let diagnostics = rulelang::lint_documents(&docs, rulelang::DEFAULT_RATIO_METRICS);
        *errors = diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .count();
        *warnings = diagnostics.len() - *errors;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_spec_load(
    path: *const c_char,
    out: *mut *mut AlertlabSpec,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = experiment::load_spec(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(AlertlabSpec(spec)));
        Ok(())
    })
}

/// Parses a spec from TOML text. Relative replay paths resolve against the
/// current directory.
#[no_mangle]
pub unsafe extern "C" fn alertlab_spec_parse(
    text: *const c_char,
    out: *mut *mut AlertlabSpec,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = experiment::parse_spec(str_arg(text, "text")?, "<memory>")?;
        *out = Box::into_raw(Box::new(AlertlabSpec(spec)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_spec_free(spec: *mut AlertlabSpec) {
    free_box(spec);
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_spec_set_seed(
    spec: *mut AlertlabSpec,
    seed: u64,
) -> AlertlabStatus {
    guard(|| {
        out_arg(spec, "spec")?.0.seed = seed;
        Ok(())
    })
}

/// Hex SHA-256 of the canonical spec.
#[no_mangle]
pub unsafe extern "C" fn alertlab_spec_digest(
    spec: *const AlertlabSpec,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&ref_arg(spec, "spec")?.0.digest());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_run(
    spec: *const AlertlabSpec,
    out: *mut *mut AlertlabRun,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let result = experiment::run_experiment(&ref_arg(spec, "spec")?.0)?;
        *out = Box::into_raw(Box::new(AlertlabRun(result)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_run_free(run: *mut AlertlabRun) {
    free_box(run);
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_run_rule_count(
    run: *const AlertlabRun,
    out: *mut usize,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ref_arg(run, "run")?.0.reports.len();
        Ok(())
    })
}

unsafe fn report_at<'a>(
    run: *const AlertlabRun,
    index: usize,
) -> Result<&'a DetectionReport, Failure> {
    let reports = &ref_arg(run, "run")?.0.reports;
    reports.get(index).ok_or_else(|| {
        Failure::new(
            AlertlabStatus::OutOfRange,
            format!("rule index {index} out of range ({} rules)", reports.len()),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_run_rule_name(
    run: *const AlertlabRun,
    index: usize,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&report_at(run, index)?.rule_name);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alertlab_run_report_summary(
    run: *const AlertlabRun,
    index: usize,
    out: *mut AlertlabReportSummary,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = report_at(run, index)?;
        *out = AlertlabReportSummary {
            tp: r.tp as u64,
            fp: r.fp as u64,
            fn_count: r.fn_ as u64,
            duplicate_tp: r.duplicate_tp as u64,
            episodes: r.episodes() as u64,
            precision: r.precision.value().unwrap_or(f64::NAN),
            recall: r.recall.value().unwrap_or(f64::NAN),
            median_ttd: r.median_ttd().unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// The rule's detection report as JSON.
#[no_mangle]
pub unsafe extern "C" fn alertlab_run_report_json(
    run: *const AlertlabRun,
    index: usize,
    out: *mut *mut c_char,
) -> AlertlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = to_c_string(&report_at(run, index)?.to_json());
        Ok(())
    })
}

/// Writes the full output directory for a run.
#[no_mangle]
pub unsafe extern "C" fn alertlab_run_emit(
    run: *const AlertlabRun,
    dir: *const c_char,
) -> AlertlabStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        let dir = str_arg(dir, "dir")?;
        experiment::emit_outputs(&run.0, Path::new(dir))
            .map(|_| ())
            .map_err(|e| Failure::new(AlertlabStatus::IoError, e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut rule = ptr::null_mut();
        let status = unsafe { alertlab_rule_parse(ptr::null(), &mut rule) };
        assert_eq!(status, AlertlabStatus::NullArgument);
        assert!(rule.is_null());
        let msg = unsafe { CStr::from_ptr(alertlab_last_error()) };
        assert!(msg.to_str().unwrap().contains("text"));
        let status = unsafe { alertlab_rule_parse(c"alert: A".as_ptr(), ptr::null_mut()) };
        assert_eq!(status, AlertlabStatus::NullArgument);
    }

    #[test]
    fn success_clears_last_error() {
        let mut rule = ptr::null_mut();
        unsafe { alertlab_rule_parse(c"garbage".as_ptr(), &mut rule) };
        assert!(!alertlab_last_error().is_null());
        let status =
            unsafe { alertlab_rule_parse(c"alert: A\nexpr: x[5s] > 1".as_ptr(), &mut rule) };
        assert_eq!(status, AlertlabStatus::Ok);
        assert!(alertlab_last_error().is_null());
        unsafe { alertlab_rule_free(rule) };
    }

    #[test]
    fn version_is_static() {
        let v = unsafe { CStr::from_ptr(alertlab_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
