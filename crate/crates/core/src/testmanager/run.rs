use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checklist::{evaluate_checklist, ChecklistResult, Requirement};
use super::config::{SeriesConfig, TestCaseConfig};
use crate::classifier::{
    assess_episode, ClassifierConfig, Controllability, DetectorNoise, DetectorOutput, MisuseLabels,
    TestCaseRecord,
};
use crate::scenario::run_episode;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub tc_index: u32,
    pub status: CaseStatus,
    pub record: Option<TestCaseRecord>,
    pub labels: Option<MisuseLabels>,
    pub detector: Option<DetectorOutput>,
    pub checklist: Option<ChecklistResult>,
    pub verdict: Verdict,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub n_cases: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_takeover: usize,
    pub n_delayed_takeover: usize,
    pub n_hazard: usize,
    pub n_misjudged: usize,
    pub n_controllability_provided: usize,
    pub n_controllability_not_provided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub verdict: Verdict,
    pub summary: Summary,
    pub cases: Vec<CaseReport>,
}

fn failed(tc_index: u32, error: String) -> CaseReport {
    CaseReport {
        tc_index,
        status: CaseStatus::Failed,
        record: None,
        labels: None,
        detector: None,
        checklist: None,
        verdict: Verdict::Fail,
        error: Some(error),
    }
}

/// Runs one case through simulation, classification and the checklist.
/// Errors and panics end up in a FAILED case report.
pub fn run_case(
    case: &TestCaseConfig,
    criteria: &BTreeMap<u8, Requirement>,
    classifier: &ClassifierConfig,
    noise: &DetectorNoise,
) -> CaseReport {
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<CaseReport, String> {
        let trace = run_episode(&case.sim, &case.driver, case.seed).map_err(|e| e.to_string())?;
        let a = assess_episode(
            &trace,
            &case.sim,
            case.tc_index,
            case.detector_seed,
            noise,
            classifier,
        )
        .map_err(|e| e.to_string())?;
        let checklist = evaluate_checklist(&trace, &a.record, &a.labels, &case.sim)
            .map_err(|e| e.to_string())?;
        let pass = criteria
            .iter()
            .all(|(id, req)| req.accepts(checklist.answer(*id)));
        Ok(CaseReport {
            tc_index: case.tc_index,
            status: CaseStatus::Completed,
            record: Some(a.record),
            labels: Some(a.labels),
            detector: Some(a.detector),
            checklist: Some(checklist),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            error: None,
        })
    }));
    match attempt {
        Ok(Ok(report)) => report,
        Ok(Err(message)) => failed(case.tc_index, message),
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".to_string());
            failed(case.tc_index, format!("panic: {message}"))
        }
    }
}

fn summarize(cases: &[CaseReport]) -> Summary {
    let mut s = Summary {
        n_cases: cases.len(),
        ..Summary::default()
    };
    for c in cases {
        match c.status {
            CaseStatus::Completed => s.n_completed += 1,
            CaseStatus::Failed => s.n_failed += 1,
        }
        match c.verdict {
            Verdict::Pass => s.n_pass += 1,
            Verdict::Fail => s.n_fail += 1,
        }
        if let (Some(r), Some(l)) = (&c.record, &c.labels) {
            s.n_takeover += usize::from(r.took_over());
            s.n_delayed_takeover += usize::from(r.del_to == 1);
            s.n_hazard += usize::from(r.hazard());
            s.n_misjudged += usize::from(l.mj == 1);
            s.n_controllability_provided +=
                usize::from(l.controllability == Controllability::Provided);
            s.n_controllability_not_provided +=
                usize::from(l.controllability == Controllability::NotProvided);
        }
    }
    s
}

/// Executes every case on a pool of `jobs` worker threads (0 picks the
/// number of CPUs). The report is ordered by `tc_index` and does not depend
/// on `jobs`.
pub fn run_series(series: &SeriesConfig, jobs: usize) -> TestReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let mut cases: Vec<CaseReport> = pool.install(|| {
        series
            .cases
            .par_iter()
            .map(|c| {
                run_case(
                    c,
                    &series.pass_criteria,
                    &series.classifier,
                    &series.detector_noise,
                )
            })
            .collect()
    });
    cases.sort_by_key(|c| c.tc_index);
    let summary = summarize(&cases);
    let verdict = if cases.iter().all(|c| c.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    TestReport {
        name: series.name.clone(),
        verdict,
        summary,
        cases,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmanager::parse_series;

    fn series(extra_case: &str) -> SeriesConfig {
        parse_series(&format!(
            r#"{{
            "name": "isolation",
            "pass_criteria": {{"9": "NO"}},
            "cases": [
                {{"tc_index": 2, "seed": 2, "detector_seed": 2, "driver": {{"variant": "NON_RESPONDER"}}}},
                {{"tc_index": 1, "seed": 1, "detector_seed": 1,
                  "driver": {{"variant": "PARAMETRIC",
                              "delay": {{"family": "uniform", "low": 0.5, "high": 3.0}},
                              "steer_scale": {{"family": "fixed", "value": 1.0}}}}}}
                {extra_case}
            ]
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn cases_are_ordered_and_deterministic() {
        let s = series("");
        let a = run_series(&s, 1);
        let b = run_series(&s, 4);
        assert_eq!(a, b);
        assert_eq!(
            a.cases.iter().map(|c| c.tc_index).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(a.verdict, Verdict::Pass);
        assert_eq!(a.summary.n_completed, 2);
    }

    #[test]
    fn failing_case_is_isolated() {
        // Full lock at highway speed turns the vehicle past perpendicular,
        // which the episode rejects.
        let bad = r#", {"tc_index": 3, "seed": 3, "detector_seed": 3,
             "driver": {"variant": "SCRIPTED", "actions": [
                 {"t": 9.0, "kind": "TAKE_OVER"}, {"t": 9.01, "kind": "STEER", "swa": 540.0}]}}"#;
        let report = run_series(&series(bad), 2);
        let statuses: Vec<_> = report.cases.iter().map(|c| c.status).collect();
        assert_eq!(
            statuses,
            vec![
                CaseStatus::Completed,
                CaseStatus::Completed,
                CaseStatus::Failed
            ]
        );
        let failed = &report.cases[2];
        assert!(
            failed.error.as_deref().unwrap().contains("episode invalid"),
            "{failed:?}"
        );
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(report.summary.n_failed, 1);
    }
}
