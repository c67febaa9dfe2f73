use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::{CaseStatus, TestReport, Verdict};
use super::TestManagerError;
use crate::classifier::{
    Controllability, DetectorOutput, MisuseLabels, SteerClass, TestCaseRecord,
};

pub const RECORDS_CSV_HEADER: &str = "TC,TO,TO_t2,delta_T2,DelTO,SWA,H,H_t3,delta_T3";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Record table, completed cases only.
    Csv,
    Json,
    Md,
    /// One extended record per completed case.
    Jsonl,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Md => "md",
            ReportFormat::Jsonl => "jsonl",
        }
    }
}

/// Record columns plus labels and the detector flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedRow {
    #[serde(flatten)]
    pub record: TestCaseRecord,
    pub mj: u8,
    pub fr: u8,
    pub fm: u8,
    pub steer_class: SteerClass,
    pub controllability: Controllability,
    pub fm_flagged: u8,
}

/// Label line accepted by the evaluation command. Extended rows qualify;
/// extra keys are ignored. A separate `del_to` key overrides the record's
/// `DelTO` column for labels annotated independently of the records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    #[serde(rename = "TC")]
    pub tc: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub del_to: Option<u8>,
    #[serde(default, rename = "DelTO", skip_serializing_if = "Option::is_none")]
    pub record_del_to: Option<u8>,
    pub steer_class: SteerClass,
    pub mj: u8,
    pub fr: u8,
    pub fm: u8,
    pub controllability: Controllability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fm_flagged: Option<u8>,
}

impl LabelRow {
    pub fn new(tc: u32, labels: &MisuseLabels, detector: Option<&DetectorOutput>) -> Self {
        Self {
            tc,
            del_to: Some(labels.del_to),
            record_del_to: None,
            steer_class: labels.steer_class,
            mj: labels.mj,
            fr: labels.fr,
            fm: labels.fm,
            controllability: labels.controllability,
            fm_flagged: detector.map(|d| d.fm_flagged),
        }
    }

    pub fn labels(&self, record: &TestCaseRecord) -> MisuseLabels {
        MisuseLabels {
            del_to: self.del_to.or(self.record_del_to).unwrap_or(record.del_to),
            steer_class: self.steer_class,
            mj: self.mj,
            fr: self.fr,
            fm: self.fm,
            controllability: self.controllability,
        }
    }
}

fn f4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn record_csv_row(r: &TestCaseRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.tc,
        r.to,
        f4(r.to_t2),
        f4(r.delta_t2),
        r.del_to,
        f4(r.swa),
        r.h,
        f4(r.h_t3),
        f4(r.delta_t3)
    )
}

pub fn records_csv<'a>(records: impl IntoIterator<Item = &'a TestCaseRecord>) -> String {
    let mut out = String::from(RECORDS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_csv_row(r));
        out.push('\n');
    }
    out
}

/// Parses a record table written by [`render_report`] or by hand.
pub fn parse_records_csv(text: &str) -> Result<Vec<TestCaseRecord>, TestManagerError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| TestManagerError::Parse(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != RECORDS_CSV_HEADER {
        return Err(TestManagerError::Parse(format!(
            "expected header `{RECORDS_CSV_HEADER}`, found `{header}`"
        )));
    }
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<TestCaseRecord>().enumerate() {
        let record = row.map_err(|e| TestManagerError::Parse(format!("row {}: {e}", i + 1)))?;
        record
            .validate(None)
            .map_err(|e| TestManagerError::Parse(format!("row {}: {e}", i + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn markdown(report: &TestReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "# Test report: {}\n", report.name);
    out.push_str("## Summary\n\n");
    let _ = writeln!(
        out,
        "- Cases: {} ({} completed, {} failed)",
        s.n_cases, s.n_completed, s.n_failed
    );
    let _ = writeln!(
        out,
        "- Take-overs: {} ({} delayed)",
        s.n_takeover, s.n_delayed_takeover
    );
    let _ = writeln!(out, "- Hazards: {}", s.n_hazard);
    let _ = writeln!(out, "- Misjudged steering: {}", s.n_misjudged);
    let _ = writeln!(
        out,
        "- Controllability provided / not provided: {} / {}\n",
        s.n_controllability_provided, s.n_controllability_not_provided
    );
    out.push_str("## Verdict\n\n");
    let verdict = match report.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
    };
    let _ = writeln!(
        out,
        "Series verdict: {verdict} ({} of {} cases pass)\n",
        s.n_pass, s.n_cases
    );
    out.push_str("## Test cases\n\n");
    out.push_str(
        "| TC | TO | TO_t2 [s] | delta_T2 [s] | DelTO | SWA [deg] | H | H_t3 [s] | delta_T3 [s] \
         | Steering | Controllability | FM flagged | Verdict |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for c in &report.cases {
        let verdict = match c.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        match (c.status, &c.record, &c.labels, &c.detector) {
            (CaseStatus::Completed, Some(r), Some(l), Some(d)) => {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {verdict} |",
                    r.tc,
                    r.to,
                    f4(r.to_t2),
                    f4(r.delta_t2),
                    r.del_to,
                    f4(r.swa),
                    r.h,
                    f4(r.h_t3),
                    f4(r.delta_t3),
                    l.steer_class,
                    l.controllability,
                    d.fm_flagged
                );
            }
            _ => {
                let error = c
                    .error
                    .as_deref()
                    .unwrap_or("")
                    .replace('|', "\\|")
                    .replace('\n', " ");
                let _ = writeln!(
                    out,
                    "| {} | FAILED: {error} | | | | | | | | | | | {verdict} |",
                    c.tc_index
                );
            }
        }
    }
    out
}

pub fn extended_rows(report: &TestReport) -> Vec<ExtendedRow> {
    report
        .cases
        .iter()
        .filter_map(|c| match (&c.record, &c.labels, &c.detector) {
            (Some(r), Some(l), Some(d)) => Some(ExtendedRow {
                record: *r,
                mj: l.mj,
                fr: l.fr,
                fm: l.fm,
                steer_class: l.steer_class,
                controllability: l.controllability,
                fm_flagged: d.fm_flagged,
            }),
            _ => None,
        })
        .collect()
}

pub fn render_report(report: &TestReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => records_csv(report.cases.iter().filter_map(|c| c.record.as_ref())),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Md => markdown(report),
        ReportFormat::Jsonl => extended_rows(report)
            .iter()
            .map(|row| serde_json::to_string(row).expect("row serializes") + "\n")
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmanager::{parse_series, run_series, Summary};

    fn table_rows() -> Vec<TestCaseRecord> {
        let rows = [
            (1, 10.23, 2.27, 1, 12.5144, 0, 0.0, 0.0),
            (2, 10.73, 2.77, 1, 3.2086, 0, 0.0, 0.0),
            (3, 11.08, 3.12, 1, 15.2058, 1, 11.10, 0.02),
            (4, 9.12, 1.16, 0, 32.1657, 1, 10.40, 1.28),
            (5, 11.35, 3.39, 1, 10.5064, 1, 11.10, 0.46),
        ];
        rows.iter()
            .map(
                |&(tc, to_t2, delta_t2, del_to, swa, h, h_t3, delta_t3)| TestCaseRecord {
                    tc,
                    to: 1,
                    to_t2,
                    delta_t2,
                    del_to,
                    swa,
                    h,
                    h_t3,
                    delta_t3,
                },
            )
            .collect()
    }

    #[test]
    fn csv_matches_table_layout_and_round_trips() {
        let csv = records_csv(&table_rows());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(RECORDS_CSV_HEADER));
        assert_eq!(
            lines.next(),
            Some("1,1,10.2300,2.2700,1,12.5144,0,0.0000,0.0000")
        );
        assert_eq!(
            lines.nth(2),
            Some("4,1,9.1200,1.1600,0,32.1657,1,10.4000,1.2800")
        );
        assert_eq!(csv.lines().count(), 6);
        let parsed = parse_records_csv(&csv).unwrap();
        assert_eq!(records_csv(&parsed), csv);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        assert!(parse_records_csv("TC,TO\n1,1\n").is_err());
    }

    #[test]
    fn json_round_trip_and_markdown_sections() {
        let series = parse_series(
            r#"{"name": "render", "cases": [
                {"tc_index": 1, "seed": 1, "detector_seed": 1, "driver": {"variant": "NON_RESPONDER"}},
                {"tc_index": 2, "seed": 2, "detector_seed": 2, "driver": {"variant": "SCRIPTED",
                  "actions": [{"t": 10.23, "kind": "TAKE_OVER"}]}}
            ]}"#,
        )
        .unwrap();
        let report = run_series(&series, 1);
        let json = render_report(&report, ReportFormat::Json);
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let md = render_report(&report, ReportFormat::Md);
        let summary = md.find("## Summary").unwrap();
        let verdict = md.find("## Verdict").unwrap();
        let table = md.find("## Test cases").unwrap();
        assert!(summary < verdict && verdict < table);
        assert!(md.contains("Series verdict: PASS"));
        assert_eq!(
            md.lines()
                .filter(|l| l.starts_with("| 1 ") || l.starts_with("| 2 "))
                .count(),
            2
        );

        let jsonl = render_report(&report, ReportFormat::Jsonl);
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        for key in [
            "TC",
            "TO",
            "delta_T3",
            "mj",
            "fr",
            "fm",
            "steer_class",
            "controllability",
            "fm_flagged",
        ] {
            assert!(first.get(key).is_some(), "{key}");
        }
        let label: LabelRow = serde_json::from_value(first).unwrap();
        assert_eq!(label.tc, 1);
        let case = &report.cases[0];
        let own = LabelRow::new(1, case.labels.as_ref().unwrap(), case.detector.as_ref());
        let back: LabelRow = serde_json::from_str(&serde_json::to_string(&own).unwrap()).unwrap();
        assert_eq!(back, own);
        assert_eq!(
            own.labels(case.record.as_ref().unwrap()),
            case.labels.unwrap()
        );
    }

    #[test]
    fn empty_report_round_trips() {
        let report = TestReport {
            name: "empty".into(),
            verdict: Verdict::Pass,
            summary: Summary::default(),
            cases: Vec::new(),
        };
        let back: TestReport =
            serde_json::from_str(&render_report(&report, ReportFormat::Json)).unwrap();
        assert_eq!(back, report);
    }
}
