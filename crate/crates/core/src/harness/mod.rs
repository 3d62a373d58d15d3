//! Config-driven experiments: seeded trials of the passive, active and LLL22
//! estimators, result files, summaries and the property suites.

pub mod config;
pub mod runner;
pub mod summary;
pub mod verify;

pub use config::{load_config, parse_config, EstimatorKind, ExperimentConfig, FeatureSource, PlannedRun};
pub use runner::{
    generate_pair, load_results, run_experiment, run_experiment_with_threads, save_results,
    write_results, TrialResult, RESULT_HEADER,
};
pub use summary::{quantiles, summarize, summary_for, EstimatorSummary, Quantiles};
pub use verify::SuiteReport;
