//! Test-case series: configuration, execution, the ten-question checklist,
//! pass/fail criteria and reports.
//!
//! A series file is a JSON document:
//!
//! ```json
//! {
//!   "name": "example",
//!   "defaults": { "mrm_grace": 5.0 },
//!   "pass_criteria": { "9": "NO", "10": "ANY" },
//!   "cases": [
//!     { "tc_index": 1, "seed": 1, "detector_seed": 101,
//!       "driver": { "variant": "NON_RESPONDER" } }
//!   ]
//! }
//! ```
//!
//! `defaults` and each case's `sim_overrides` are partial simulation
//! configurations deep-merged onto the built-in defaults, in that order.

mod checklist;
mod config;
mod render;
mod run;

pub use checklist::{
    evaluate_checklist, series_verdict, Answer, ChecklistResult, Requirement, QUESTIONS,
};
pub use config::{
    apply_overrides, load_series, parse_series, parse_sim_config, SeriesConfig, TestCaseConfig,
};
pub use render::{
    parse_records_csv, record_csv_row, records_csv, render_report, ExtendedRow, LabelRow,
    ReportFormat, RECORDS_CSV_HEADER,
};
pub use run::{run_case, run_series, CaseReport, CaseStatus, Summary, TestReport, Verdict};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TestManagerError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("mismatched inputs: {0}")]
    MismatchedInputs(String),
}
