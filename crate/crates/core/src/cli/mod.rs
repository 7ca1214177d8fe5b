//! `alertlab` command line.
//!
//! Exit codes: 0 success, 1 validation or parse error, 2 runtime error,
//! 3 a `--assert` expression did not hold.

pub mod assertions;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::experiment::{
    self, emit_outputs, load_reports, load_spec, ExperimentError, RunResult, SpecError, Variation,
};
use crate::matcher::{DetectionReport, Granularity, MatchPolicy};
use crate::rulelang::{self, DEFAULT_RATIO_METRICS};
use crate::sim::load_fault_schedule_csv;
use crate::timeseries::csv::load_series_csv;

use self::assertions::Assertion;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_ASSERT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "alertlab",
    version,
    about = "Experiment with alerting rules against injected faults"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct PolicyFlags {
    /// Seconds after a fault unit ends during which a firing still counts.
    #[arg(long)]
    pub grace_after_end: Option<u64>,
    /// Seconds before a fault unit starts during which a firing counts.
    #[arg(long)]
    pub grace_before_start: Option<u64>,
    /// Score detections per `phase` or per merged `pattern`.
    #[arg(long)]
    pub granularity: Option<Granularity>,
    /// Windows closer than this many seconds merge into one pattern.
    #[arg(long)]
    pub merge_gap: Option<u64>,
}

impl PolicyFlags {
    fn apply(&self, mut policy: MatchPolicy) -> MatchPolicy {
        if let Some(v) = self.grace_after_end {
            policy.grace_after_end = v;
        }
        if let Some(v) = self.grace_before_start {
            policy.grace_before_start = v;
        }
        if let Some(v) = self.granularity {
            policy.granularity = v;
        }
        if let Some(v) = self.merge_gap {
            policy.pattern_merge_gap = v;
        }
        policy
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment spec and write its outputs.
    Run {
        spec: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        policy: PolicyFlags,
        /// Assertion such as `recall(Base90) >= 0.8`; repeatable.
        #[arg(long = "assert")]
        asserts: Vec<String>,
    },
    /// Run variations of a spec.
    Batch {
        spec: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// TOML file of `[[variation]]` tables with `name` and a `set` table.
        #[arg(long)]
        variations: Option<PathBuf>,
        /// Add N seed-only variations (seeds spec.seed + index).
        #[arg(long, default_value_t = 0)]
        seed_sweep: usize,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Check a rule file; exits 1 if any error is found.
    Lint {
        file: PathBuf,
        /// Metrics to treat as ratios in [0, 1] (default: errorRate).
        #[arg(long = "ratio-metric")]
        ratio_metrics: Vec<String>,
    },
    /// Evaluate rules against recorded series and a fault schedule.
    Replay {
        #[arg(long = "series", required = true)]
        series: Vec<PathBuf>,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyFlags,
        #[arg(long = "assert")]
        asserts: Vec<String>,
    },
    /// Summarise an existing output directory and check assertions.
    Report {
        dir: PathBuf,
        #[arg(long = "assert")]
        asserts: Vec<String>,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    execute(cli.command, stdout, stderr)
}

pub fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    match command {
        Command::Run {
            spec,
            out,
            seed,
            policy,
            asserts,
        } => cmd_run(&spec, &out, seed, &policy, &asserts, stdout, stderr),
        Command::Batch {
            spec,
            out,
            variations,
            seed_sweep,
            parallelism,
        } => cmd_batch(
            &spec,
            &out,
            variations.as_deref(),
            seed_sweep,
            parallelism,
            stdout,
            stderr,
        ),
        Command::Lint {
            file,
            ratio_metrics,
        } => cmd_lint(&file, &ratio_metrics, stdout, stderr),
        Command::Replay {
            series,
            schedule,
            rules,
            out,
            policy,
            asserts,
        } => cmd_replay(
            &series, &schedule, &rules, &out, &policy, &asserts, stdout, stderr,
        ),
        Command::Report { dir, asserts } => cmd_report(&dir, &asserts, stdout, stderr),
    }
}

fn parse_assertions(asserts: &[String], stderr: &mut dyn Write) -> Option<Vec<Assertion>> {
    let mut out = Vec::new();
    for a in asserts {
        match a.parse() {
            Ok(a) => out.push(a),
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return None;
            }
        }
    }
    Some(out)
}

fn experiment_exit(err: &ExperimentError) -> u8 {
    if err.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_RUNTIME
    }
}

/// Per-rule summary table.
pub fn summary_table(reports: &[DetectionReport]) -> String {
    let mut out = format!(
        "{:<24} {:>9} {:>9} {:>11} {:>10} {:>10}\n",
        "rule", "patterns", "episodes", "median_ttd", "precision", "recall"
    );
    for r in reports {
        let units = r.tp + r.fn_;
        let ttd = r
            .median_ttd()
            .map_or_else(|| "-".to_string(), |v| format!("{v}s"));
        out.push_str(&format!(
            "{:<24} {:>9} {:>9} {:>11} {:>10} {:>10}\n",
            r.rule_name,
            format!("{}/{}", r.tp, units),
            r.episodes(),
            ttd,
            r.precision.to_string(),
            r.recall.to_string()
        ));
    }
    out
}

fn check_assertions(
    assertions: &[Assertion],
    reports: &[DetectionReport],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let mut failed = false;
    for a in assertions {
        match a.check(reports) {
            Ok(outcome) => {
                let tag = if outcome.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(stdout, "{tag} {}  [{}]", a.text, outcome.detail);
                failed |= !outcome.passed;
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_INPUT;
            }
        }
    }
    if failed {
        EXIT_ASSERT
    } else {
        EXIT_OK
    }
}

fn finish(
    result: &RunResult,
    out: &Path,
    assertions: &[Assertion],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    if let Err(e) = emit_outputs(result, out) {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_RUNTIME;
    }
    let _ = writeln!(
        stdout,
        "{} (seed {}, {} fault units, {:.3}s)",
        result.name,
        result.seed,
        result.reports.first().map_or(0, |r| r.records.len()),
        result.wall_time.as_secs_f64()
    );
    let _ = write!(stdout, "{}", summary_table(&result.reports));
    let _ = writeln!(stdout, "outputs written to {}", out.display());
    check_assertions(assertions, &result.reports, stdout, stderr)
}

pub fn cmd_run(
    spec_path: &Path,
    out: &Path,
    seed: Option<u64>,
    policy: &PolicyFlags,
    asserts: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let Some(assertions) = parse_assertions(asserts, stderr) else {
        return EXIT_INPUT;
    };
    let mut spec = match load_spec(spec_path) {
        Ok(spec) => spec,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.policy = policy.apply(spec.policy);
    match experiment::run_experiment(&spec) {
        Ok(result) => finish(&result, out, &assertions, stdout, stderr),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            experiment_exit(&e)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariationFile {
    #[serde(default)]
    variation: Vec<VariationEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariationEntry {
    name: Option<String>,
    #[serde(default)]
    set: toml::Table,
}

pub fn load_variations(path: &Path) -> Result<Vec<Variation>, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: VariationFile = toml::from_str(&text).map_err(|e| SpecError::Parse {
        origin: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(file
        .variation
        .into_iter()
        .map(|v| Variation {
            name: v.name,
            overrides: v.set.into_iter().collect(),
        })
        .collect())
}

fn dir_name(index: usize, variation: &Variation) -> String {
    let name: String = variation
        .name
        .as_deref()
        .unwrap_or("variation")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:03}-{name}")
}

pub fn cmd_batch(
    spec_path: &Path,
    out: &Path,
    variations_path: Option<&Path>,
    seed_sweep: usize,
    parallelism: usize,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let spec = match load_spec(spec_path) {
        Ok(spec) => spec,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let mut variations = match variations_path.map(load_variations).transpose() {
        Ok(v) => v.unwrap_or_default(),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let offset = variations.len();
    variations.extend((0..seed_sweep).map(|i| Variation {
        name: Some(format!(
            "seed-{}",
            spec.seed.wrapping_add((offset + i) as u64)
        )),
        overrides: Vec::new(),
    }));
    if variations.is_empty() {
        let _ = writeln!(
            stderr,
            "error: no variations (use --variations or --seed-sweep)"
        );
        return EXIT_INPUT;
    }

    let results = experiment::run_batch(&spec, &variations, parallelism);
    let mut csv = String::from(
        "variation,seed,rule,tp,fn,fp,duplicate_tp,precision,recall,median_ttd,error\n",
    );
    let mut any_error = false;
    for (i, (variation, result)) in variations.iter().zip(&results).enumerate() {
        let label = dir_name(i, variation);
        match result {
            Ok(result) => {
                let dir = out.join(&label);
                if let Err(e) = emit_outputs(result, &dir) {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_RUNTIME;
                }
                let _ = writeln!(stdout, "== {label} (seed {})", result.seed);
                let _ = write!(stdout, "{}", summary_table(&result.reports));
                for r in &result.reports {
                    csv.push_str(&format!(
                        "{label},{},{},{},{},{},{},{},{},{},\n",
                        result.seed,
                        r.rule_name,
                        r.tp,
                        r.fn_,
                        r.fp,
                        r.duplicate_tp,
                        r.precision,
                        r.recall,
                        r.median_ttd().map_or_else(String::new, |v| v.to_string())
                    ));
                }
            }
            Err(e) => {
                any_error = true;
                let _ = writeln!(stdout, "== {label} FAILED: {e}");
                let message = e.to_string().replace(['"', '\n'], " ");
                csv.push_str(&format!("{label},,,,,,,,,,\"{message}\"\n"));
            }
        }
    }
    if let Err(e) =
        std::fs::create_dir_all(out).and_then(|_| std::fs::write(out.join("batch.csv"), csv))
    {
        let _ = writeln!(stderr, "error: {}: {e}", out.display());
        return EXIT_RUNTIME;
    }
    if any_error {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    }
}

pub fn cmd_lint(
    file: &Path,
    ratio_metrics: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", file.display());
            return EXIT_INPUT;
        }
    };
    let ratios: Vec<&str> = if ratio_metrics.is_empty() {
        DEFAULT_RATIO_METRICS.to_vec()
    } else {
        ratio_metrics.iter().map(String::as_str).collect()
    };
    let docs = rulelang::split_documents(&text);
    let diagnostics = rulelang::lint_documents(&docs, &ratios);
    for d in &diagnostics {
        let _ = writeln!(stdout, "{}:{d}", file.display());
    }
    let errors = diagnostics
        .iter()
        .filter(|d| d.severity == rulelang::Severity::Error)
        .count();
    let _ = writeln!(
        stdout,
        "{} rule(s), {} error(s), {} warning(s)",
        docs.len(),
        errors,
        diagnostics.len() - errors
    );
    if errors > 0 {
        EXIT_INPUT
    } else {
        EXIT_OK
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_replay(
    series_paths: &[PathBuf],
    schedule_path: &Path,
    rules_path: &Path,
    out: &Path,
    policy: &PolicyFlags,
    asserts: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let Some(assertions) = parse_assertions(asserts, stderr) else {
        return EXIT_INPUT;
    };
    let mut series = Vec::new();
    for p in series_paths {
        match load_series_csv(p) {
            Ok(s) => series.push(s),
            Err(e) => {
                let _ = writeln!(stderr, "error: {}: {e}", p.display());
                return EXIT_INPUT;
            }
        }
    }
    let schedule = match load_fault_schedule_csv(schedule_path) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", schedule_path.display());
            return EXIT_INPUT;
        }
    };
    let rules = match std::fs::read_to_string(rules_path)
        .map_err(|e| e.to_string())
        .and_then(|text| {
            let docs = rulelang::split_documents(&text);
            let diags = rulelang::lint_documents(&docs, DEFAULT_RATIO_METRICS);
            if let Some(d) = diags
                .iter()
                .find(|d| d.severity == rulelang::Severity::Error)
            {
                return Err(d.to_string());
            }
            rulelang::parse_rule_file(&text).map_err(|e| e.to_string())
        }) {
        Ok(r) if !r.is_empty() => r,
        Ok(_) => {
            let _ = writeln!(stderr, "error: {}: no rules", rules_path.display());
            return EXIT_INPUT;
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", rules_path.display());
            return EXIT_INPUT;
        }
    };
    let policy = policy.apply(MatchPolicy::default());
    if let Some((field, msg)) = policy.problems().into_iter().next() {
        let _ = writeln!(stderr, "error: {field}: {msg}");
        return EXIT_INPUT;
    }
    let started = std::time::Instant::now();
    let t_end = experiment::replay_end(&series);
    let (episodes, reports) =
        match experiment::evaluate_and_classify(&rules, &series, &schedule, &policy, t_end) {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return experiment_exit(&e);
            }
        };
    let result = RunResult {
        name: "replay".into(),
        spec_digest: String::new(),
        seed: 0,
        t_end,
        policy,
        series,
        schedule,
        rules,
        episodes,
        reports,
        wall_time: started.elapsed(),
    };
    finish(&result, out, &assertions, stdout, stderr)
}

pub fn cmd_report(
    dir: &Path,
    asserts: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> u8 {
    let Some(assertions) = parse_assertions(asserts, stderr) else {
        return EXIT_INPUT;
    };
    let reports = match load_reports(dir) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let _ = write!(stdout, "{}", summary_table(&reports));
    check_assertions(&assertions, &reports, stdout, stderr)
}
