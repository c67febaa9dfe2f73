use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sotif_cli::commands::{evaluate_files, join_labels};
use sotif_core::classifier::{derive_record, ClassifierConfig};
use sotif_core::metrics::{build_report, ProbabilityReport};
use sotif_core::scenario::{EpisodeTrace, SimConfig};
use sotif_core::testmanager::{parse_records_csv, records_csv, CaseStatus, LabelRow, TestReport};

fn sotif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sotif"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn repo_file(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(path)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/joint-counts")
        .join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_and_help() {
    let out = sotif(&["--version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("sotif "));
    let help = sotif(&["--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["simulate", "run-series", "evaluate", "report", "serve"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&sotif(&["frobnicate"])), 2);
}

#[test]
fn simulate_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = sotif(&[
        "simulate",
        "--config",
        s(&repo_file("configs/sim-default.json")),
        "--driver",
        s(&repo_file("configs/driver-non-responder.json")),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for file in ["trace.csv", "events.jsonl", "record.csv", "labels.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    let records =
        parse_records_csv(&std::fs::read_to_string(out.join("record.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!((records[0].to, records[0].h), (0, 0));
    let labels: LabelRow =
        serde_json::from_str(&std::fs::read_to_string(out.join("labels.json")).unwrap()).unwrap();
    assert_eq!(labels.tc, 1);
}

#[test]
fn simulate_rejects_bad_inputs_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let bad_config = write(dir.path(), "bad.json", r#"{"dt": "fast"}"#);
    let bad_timeline = write(
        dir.path(),
        "order.json",
        r#"{"timeline": {"warning_time": 9.0}}"#,
    );
    let driver = repo_file("configs/driver-non-responder.json");
    let bad_driver = write(
        dir.path(),
        "driver.json",
        r#"{"variant": "SCRIPTED", "actions": [{"t": 9.0, "kind": "TAKE_OVER"}, {"t": 9.5, "kind": "TAKE_OVER"}]}"#,
    );
    let good_config = repo_file("configs/sim-default.json");
    for (config, driver) in [
        (&bad_config, &driver),
        (&bad_timeline, &driver),
        (&good_config, &bad_driver),
        (&dir.path().join("missing.json"), &driver),
    ] {
        let out = dir.path().join("out");
        let result = sotif(&[
            "simulate",
            "--config",
            s(config),
            "--driver",
            s(driver),
            "--seed",
            "1",
            "--out",
            s(&out),
        ]);
        assert_eq!(
            code(&result),
            2,
            "{}",
            String::from_utf8_lossy(&result.stderr)
        );
        assert!(!out.exists());
    }
}

#[test]
fn simulate_episode_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let driver = write(
        dir.path(),
        "wild.json",
        r#"{"variant": "SCRIPTED", "actions": [{"t": 8.5, "kind": "TAKE_OVER"}, {"t": 8.51, "kind": "STEER", "swa": 540.0}]}"#,
    );
    let out = dir.path().join("out");
    let result = sotif(&[
        "simulate",
        "--config",
        s(&repo_file("configs/sim-default.json")),
        "--driver",
        s(&driver),
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        code(&result),
        3,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(!out.exists());
}

#[test]
fn record_rederives_from_exported_trace() {
    let dir = tempfile::tempdir().unwrap();
    for (i, driver) in [
        "configs/driver-non-responder.json",
        "configs/driver-delayed.json",
        "configs/driver-oversteer.json",
    ]
    .iter()
    .enumerate()
    {
        let out = dir.path().join(format!("run{i}"));
        let result = sotif(&[
            "simulate",
            "--config",
            s(&repo_file("configs/sim-default.json")),
            "--driver",
            s(&repo_file(driver)),
            "--seed",
            "9",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&result), 0);
        let sim = SimConfig::default();
        let trace = EpisodeTrace::from_exports(
            sim.dt,
            &std::fs::read_to_string(out.join("trace.csv")).unwrap(),
            &std::fs::read_to_string(out.join("events.jsonl")).unwrap(),
        )
        .unwrap();
        let record = derive_record(
            &trace,
            sim.timeline.tor_time,
            1,
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(
            records_csv([&record]),
            std::fs::read_to_string(out.join("record.csv")).unwrap(),
            "{driver}"
        );
    }
}

fn run_series(series: &Path, out: &Path, jobs: &str) -> i32 {
    code(&sotif(&[
        "run-series",
        "--series",
        s(series),
        "--out",
        s(out),
        "--jobs",
        jobs,
    ]))
}

#[test]
fn run_series_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table");
    assert_eq!(
        run_series(&repo_file("configs/table-rows.json"), &out, "2"),
        0
    );
    for file in ["records.csv", "report.json", "report.md", "results.jsonl"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    let failing = write(
        dir.path(),
        "fail.json",
        r#"{"name": "fail", "pass_criteria": {"5": "YES"},
            "cases": [{"tc_index": 1, "seed": 1, "detector_seed": 1,
                       "driver": {"variant": "NON_RESPONDER"}}]}"#,
    );
    assert_eq!(run_series(&failing, &dir.path().join("fail"), "1"), 1);
    let invalid = write(dir.path(), "invalid.json", r#"{"name": "x", "cases": []}"#);
    assert_eq!(run_series(&invalid, &dir.path().join("invalid"), "1"), 2);
    assert!(!dir.path().join("invalid").exists());
    assert_eq!(
        run_series(&dir.path().join("nope.json"), &dir.path().join("n"), "1"),
        2
    );
}

#[test]
fn campaign_has_fifty_rows_and_controllability_split() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("campaign");
    assert_eq!(
        run_series(&repo_file("configs/campaign-50.json"), &out, "4"),
        1
    );
    let records =
        parse_records_csv(&std::fs::read_to_string(out.join("records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 50);
    let report: TestReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report
        .cases
        .iter()
        .all(|c| c.status == CaseStatus::Completed));
    assert_eq!((report.summary.n_pass, report.summary.n_fail), (22, 28));
}

#[test]
fn evaluate_joint_count_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics/report.json");
    let result = sotif(&[
        "evaluate",
        "--records",
        s(&fixture("records.csv")),
        "--labels",
        s(&fixture("labels.jsonl")),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report: ProbabilityReport =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.joint.rows(), [10, 6, 2, 8, 2]);
    let md = std::fs::read_to_string(out.with_extension("md")).unwrap();
    for value in ["| 1.67 |", "| 0.25 |", "| 1.00 |"] {
        assert!(md.contains(value), "{value}");
    }
}

#[test]
fn evaluate_schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(
        dir.path(),
        "empty.csv",
        "TC,TO,TO_t2,delta_T2,DelTO,SWA,H,H_t3,delta_T3\n",
    );
    let wrong_header = write(dir.path(), "wrong.csv", "TC,TO\n1,1\n");
    let bad_labels = write(dir.path(), "labels.jsonl", "{\"TC\": 1}\n");
    let records = fixture("records.csv");
    let labels = fixture("labels.jsonl");
    for (r, l) in [
        (&empty, &labels),
        (&wrong_header, &labels),
        (&records, &bad_labels),
        (&records, &empty),
    ] {
        let out = dir.path().join("r.json");
        let result = sotif(&[
            "evaluate",
            "--records",
            s(r),
            "--labels",
            s(l),
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&result), 2);
        assert!(!out.exists());
    }
}

#[test]
fn evaluate_of_rendered_run_matches_in_process_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("campaign");
    run_series(&repo_file("configs/campaign-50.json"), &out, "3");
    let report: TestReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let cases: Vec<_> = report
        .cases
        .iter()
        .map(|c| (c.labels.unwrap(), c.record.unwrap()))
        .collect();
    let detector: Vec<_> = report.cases.iter().map(|c| c.detector.unwrap()).collect();
    let direct = build_report(&cases, &detector).unwrap();

    let from_files = evaluate_files(&out.join("records.csv"), &out.join("results.jsonl")).unwrap();
    assert_eq!(from_files, direct);

    let (joined, _) = join_labels(
        &parse_records_csv(&std::fs::read_to_string(out.join("records.csv")).unwrap()).unwrap(),
        &std::fs::read_to_string(out.join("results.jsonl")).unwrap(),
    )
    .unwrap();
    let labels = |v: &[(_, _)]| v.iter().map(|(l, _)| *l).collect::<Vec<_>>();
    assert_eq!(labels(&joined), labels(&cases));
    assert_eq!(
        records_csv(joined.iter().map(|(_, r)| r)),
        records_csv(cases.iter().map(|(_, r)| r))
    );
}

#[test]
fn report_rerenders_saved_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table");
    run_series(&repo_file("configs/table-rows.json"), &out, "1");
    let json = out.join("report.json");
    for (format, file) in [
        ("md", "report.md"),
        ("csv", "records.csv"),
        ("jsonl", "results.jsonl"),
        ("json", "report.json"),
    ] {
        let rendered = dir.path().join(format!("again.{format}"));
        let result = sotif(&[
            "report",
            "--input",
            s(&json),
            "--format",
            format,
            "--out",
            s(&rendered),
        ]);
        assert_eq!(code(&result), 0);
        assert_eq!(
            std::fs::read(&rendered).unwrap(),
            std::fs::read(out.join(file)).unwrap(),
            "{format}"
        );
    }
    let stdout = sotif(&["report", "--input", s(&json)]);
    assert_eq!(stdout.stdout, std::fs::read(out.join("report.md")).unwrap());

    let metrics = dir.path().join("metrics.json");
    sotif(&[
        "evaluate",
        "--records",
        s(&out.join("records.csv")),
        "--labels",
        s(&out.join("results.jsonl")),
        "--out",
        s(&metrics),
    ]);
    let md = sotif(&["report", "--input", s(&metrics), "--format", "md"]);
    assert_eq!(code(&md), 0);
    assert_eq!(
        md.stdout,
        std::fs::read(metrics.with_extension("md")).unwrap()
    );
    assert_eq!(
        code(&sotif(&[
            "report",
            "--input",
            s(&metrics),
            "--format",
            "csv"
        ])),
        2
    );
    let junk = write(dir.path(), "junk.json", "{}");
    assert_eq!(code(&sotif(&["report", "--input", s(&junk)])), 2);
}
