//! The experiment matrix: declarative config, the cell runner, and report
//! generation from the run and diagnostics stores.

mod config;
mod diagnostics;
mod report;
mod runner;

pub use config::{
    read_canned, CacheConfig, EncoderConfig, EncoderEndpointConfig, ExperimentConfig, LimitsConfig, RewriterConfig,
    RewriterEndpointConfig, TaskConfig,
};
pub use diagnostics::{read_diagnostics, write_diagnostics, Diagnostic};
pub use report::{build_reports, join_rows, load_reports_input, write_reports, ReportBundle, ReportInput};
pub use runner::{
    run_matrix, CellFailure, CellKey, CellOutput, MatrixOptions, MatrixSummary, Provenance, Session, DIAGNOSTICS_FILE,
    FAILURES_FILE, MANIFEST_FILE, RUNS_FILE, SUMMARY_FILE,
};
