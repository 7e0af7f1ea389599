//! Experiment orchestration: variants, configuration, logging and comparison.

pub mod compare;
pub mod config;
pub mod log;
pub mod run;

pub use compare::{collect_runs, compare_runs, load_run, sweep, ComparisonReport};
pub use config::{parse_grid_dims, DatasetShape, MethodVariant, RunConfig};
pub use log::{format_float, read_run_csv, read_run_csv_file, KeyValueFile, RunCsvWriter, RunRecord, RUN_HEADER};
pub use run::{
    egan_fitness, egan_generation, egan_select, ganbce_epoch, run_experiment, run_experiment_observed, EganOutcome,
    Evaluator, MetricReport, RunLog, RunStatus, RunSummary,
};
