//! Experiment specs, single and batch runs, and output emission.
//!
//! A spec combines a fault treatment (the fault pattern) with an
//! observability treatment (the rule set); the two vary independently.

mod output;
mod run;
mod spec;

pub use self::output::{
    emit_outputs, load_reports, load_run_metadata, plotdata, FileKind, Manifest, ManifestEntry,
    OutputError, RunMetadata,
};
pub use self::run::{
    apply_variation, evaluate_and_classify, replay_end, run_batch, run_experiment, ExperimentError,
    RuleEpisodes, RunResult, Stage, Variation,
};
pub use self::spec::{
    load_spec, parse_spec, save_spec, ExperimentSpec, FieldProblem, Mode, SpecError,
    ValidationError, DEFAULT_SCRAPE_INTERVAL,
};
