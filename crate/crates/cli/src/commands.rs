use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sotif_core::classifier::{
    assess_episode, ClassifierConfig, DetectorNoise, DetectorOutput, MisuseLabels, TestCaseRecord,
};
use sotif_core::driver::DriverSpec;
use sotif_core::metrics::{build_report, ProbabilityReport};
use sotif_core::scenario::run_episode;
use sotif_core::testmanager::{
    load_series, parse_records_csv, parse_sim_config, records_csv, render_report, LabelRow,
    ReportFormat, TestManagerError, TestReport, Verdict,
};

use crate::{read_input, write_output, CliError};

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const RECORD_FILE: &str = "record.csv";
pub const LABELS_FILE: &str = "labels.json";

pub const RECORDS_FILE: &str = "records.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const RESULTS_FILE: &str = "results.jsonl";

fn invalid(e: TestManagerError) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub driver: PathBuf,
    pub seed: u64,
    pub detector_seed: Option<u64>,
    pub tc: u32,
    pub out: PathBuf,
}

/// Runs one episode and writes its trace, events, record and labels.
/// Nothing is written unless the inputs validate and the episode completes.
pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let sim = parse_sim_config(&read_input(&args.config)?).map_err(invalid)?;
    let driver: DriverSpec = serde_json::from_str(&read_input(&args.driver)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.driver.display())))?;
    driver
        .validate()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.driver.display())))?;

    let trace =
        run_episode(&sim, &driver, args.seed).map_err(|e| CliError::Episode(e.to_string()))?;
    let assessment = assess_episode(
        &trace,
        &sim,
        args.tc,
        args.detector_seed.unwrap_or(args.seed),
        &DetectorNoise::default(),
        &ClassifierConfig::default(),
    )
    .map_err(|e| CliError::Episode(e.to_string()))?;

    let labels = LabelRow::new(args.tc, &assessment.labels, Some(&assessment.detector));
    let mut labels_json = serde_json::to_string(&labels).expect("labels serialize");
    labels_json.push('\n');
    write_output(&args.out.join(TRACE_FILE), &trace.samples_csv())?;
    write_output(&args.out.join(EVENTS_FILE), &trace.events_jsonl())?;
    write_output(
        &args.out.join(RECORD_FILE),
        &records_csv([&assessment.record]),
    )?;
    write_output(&args.out.join(LABELS_FILE), &labels_json)
}

/// Runs a series and writes all report formats. Returns the series verdict.
pub fn run_series(series: &Path, out: &Path, jobs: usize) -> Result<Verdict, CliError> {
    let series = load_series(series).map_err(invalid)?;
    let report = sotif_core::testmanager::run_series(&series, jobs);
    write_test_report(&report, out)?;
    Ok(report.verdict)
}

pub fn write_test_report(report: &TestReport, out: &Path) -> Result<(), CliError> {
    for (file, format) in [
        (RECORDS_FILE, ReportFormat::Csv),
        (REPORT_JSON_FILE, ReportFormat::Json),
        (REPORT_MD_FILE, ReportFormat::Md),
        (RESULTS_FILE, ReportFormat::Jsonl),
    ] {
        write_output(&out.join(file), &render_report(report, format))?;
    }
    Ok(())
}

pub type LabelledCases = Vec<(MisuseLabels, TestCaseRecord)>;

/// Parses label lines and joins them to the records by `TC`.
///
/// Every record needs exactly one label line and vice versa. Detector flags
/// must be present on all lines or on none.
pub fn join_labels(
    records: &[TestCaseRecord],
    labels_jsonl: &str,
) -> Result<(LabelledCases, Vec<DetectorOutput>), CliError> {
    let mut rows = BTreeMap::new();
    for (i, line) in labels_jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: LabelRow = serde_json::from_str(line)
            .map_err(|e| CliError::Invalid(format!("labels line {}: {e}", i + 1)))?;
        if rows.insert(row.tc, row).is_some() {
            return Err(CliError::Invalid(format!(
                "labels line {}: duplicate TC {}",
                i + 1,
                row.tc
            )));
        }
    }
    let mut cases = Vec::with_capacity(records.len());
    let mut flags = Vec::new();
    for record in records {
        let row = rows
            .remove(&record.tc)
            .ok_or_else(|| CliError::Invalid(format!("no labels for TC {}", record.tc)))?;
        cases.push((row.labels(record), *record));
        flags.push(row.fm_flagged);
    }
    if let Some(tc) = rows.keys().next() {
        return Err(CliError::Invalid(format!("labels for unknown TC {tc}")));
    }
    let detector = match (
        flags.iter().all(Option::is_some),
        flags.iter().all(Option::is_none),
    ) {
        (true, _) => flags
            .into_iter()
            .flatten()
            .map(|fm_flagged| DetectorOutput {
                fm_flagged,
                measured_delay: 0.0,
                measured_swa_dev: 0.0,
            })
            .collect(),
        (false, true) => Vec::new(),
        (false, false) => {
            return Err(CliError::Invalid(
                "fm_flagged must be given on every label line or on none".into(),
            ))
        }
    };
    Ok((cases, detector))
}

/// Computes the probability report from a record table and label lines.
pub fn evaluate_files(records: &Path, labels: &Path) -> Result<ProbabilityReport, CliError> {
    let records = parse_records_csv(&read_input(records)?).map_err(invalid)?;
    if records.is_empty() {
        return Err(CliError::Invalid("record table has no rows".into()));
    }
    let (cases, detector) = join_labels(&records, &read_input(labels)?)?;
    build_report(&cases, &detector).map_err(|e| CliError::Invalid(e.to_string()))
}

/// Writes the report as JSON to `out` and as Markdown next to it with an
/// `.md` extension.
pub fn evaluate(records: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let report = evaluate_files(records, labels)?;
    write_output(out, &report.to_json())?;
    write_output(&out.with_extension("md"), &report.to_markdown())
}

/// Re-renders a saved `report.json`. A saved probability report can be
/// rendered as JSON or Markdown.
pub fn render_saved(input: &Path, format: ReportFormat) -> Result<String, CliError> {
    let text = read_input(input)?;
    if let Ok(report) = serde_json::from_str::<TestReport>(&text) {
        return Ok(render_report(&report, format));
    }
    match (serde_json::from_str::<ProbabilityReport>(&text), format) {
        (Ok(p), ReportFormat::Json) => Ok(p.to_json()),
        (Ok(p), ReportFormat::Md) => Ok(p.to_markdown()),
        (Ok(_), other) => Err(CliError::Invalid(format!(
            "a probability report cannot be rendered as {}",
            other.extension()
        ))),
        (Err(_), _) => Err(CliError::Invalid(format!(
            "{} is neither a test report nor a probability report",
            input.display()
        ))),
    }
}

pub fn report(input: &Path, format: ReportFormat, out: Option<&Path>) -> Result<(), CliError> {
    let rendered = render_saved(input, format)?;
    match out {
        Some(path) => write_output(path, &rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
