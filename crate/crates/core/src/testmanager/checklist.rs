use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TestManagerError;
use crate::classifier::{Controllability, MisuseLabels, SteerClass, TestCaseRecord};
use crate::scenario::{AdsMode, EpisodeTrace, EventKind, SimConfig, LANE_CHANGE_DURATION};
use crate::TIME_EPS;

/// Short titles of the ten checklist questions, indexed by id - 1.
pub const QUESTIONS: [&str; 10] = [
    "ADS performs longitudinal and lateral control",
    "Lane markings go missing during the lane change",
    "ADS sends a warning to the driver",
    "ADS issues an imminent take-over request",
    "Driver responds to the TOR and takes over",
    "ADS performs a minimal risk maneuver",
    "Driver takes over within the specified time",
    "Take-over leads to oversteer or understeer",
    "Take-over leads to a hazard",
    "Controllability is provided",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl Answer {
    fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "YES",
            Answer::No => "NO",
            Answer::NotApplicable => "N/A",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Answer required by a pass criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Requirement {
    Yes,
    No,
    Any,
}

impl Requirement {
    pub fn accepts(self, answer: Answer) -> bool {
        matches!(
            (self, answer),
            (Requirement::Any, _) | (Requirement::Yes, Answer::Yes) | (Requirement::No, Answer::No)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistResult {
    #[serde(deserialize_with = "by_question")]
    pub answers: BTreeMap<u8, Answer>,
    #[serde(deserialize_with = "by_question")]
    pub evidence: BTreeMap<u8, String>,
}

/// Reads a map keyed by question id. Keys arrive as strings when the result
/// is nested in a tagged enum, so they are parsed explicitly.
fn by_question<'de, D, T>(deserializer: D) -> Result<BTreeMap<u8, T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    BTreeMap::<String, T>::deserialize(deserializer)?
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u8>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("bad question id `{k}`")))
        })
        .collect()
}

impl ChecklistResult {
    pub fn answer(&self, id: u8) -> Answer {
        self.answers[&id]
    }
}

fn at(t: Option<f64>) -> String {
    t.map(|t| format!("t = {t:.2} s"))
        .unwrap_or_else(|| "absent".to_string())
}

fn check_consistency(
    trace: &EpisodeTrace,
    record: &TestCaseRecord,
) -> Result<(), TestManagerError> {
    let to = trace.takeover_time();
    match (to, record.took_over()) {
        (Some(t), true) if (t - record.to_t2).abs() <= 1e-6 => {}
        (None, false) => {}
        _ => {
            return Err(TestManagerError::MismatchedInputs(format!(
                "trace take-over {} vs record TO = {} at {:.4}",
                at(to),
                record.to,
                record.to_t2
            )))
        }
    }
    let hazard = trace.first_hazard().map(|e| e.t);
    match (hazard, record.hazard()) {
        (Some(t), true) if (t - record.h_t3).abs() <= 1e-6 => Ok(()),
        (None, false) => Ok(()),
        _ => Err(TestManagerError::MismatchedInputs(format!(
            "trace hazard {} vs record H = {} at {:.4}",
            at(hazard),
            record.h,
            record.h_t3
        ))),
    }
}

/// Answers the ten checklist questions for one episode.
pub fn evaluate_checklist(
    trace: &EpisodeTrace,
    record: &TestCaseRecord,
    labels: &MisuseLabels,
    config: &SimConfig,
) -> Result<ChecklistResult, TestManagerError> {
    check_consistency(trace, record)?;
    let timeline = &config.timeline;
    let within_dt =
        |t: Option<f64>, target: f64| t.is_some_and(|t| (t - target).abs() <= config.dt + TIME_EPS);
    let mut answers = BTreeMap::new();
    let mut evidence = BTreeMap::new();
    let mut put = |id: u8, answer: Answer, why: String| {
        answers.insert(id, answer);
        evidence.insert(id, why);
    };

    let first_mode = trace.samples.first().map(|s| s.mode);
    put(
        1,
        Answer::from_bool(first_mode == Some(AdsMode::Automated)),
        format!(
            "initial mode {}",
            first_mode.map(|m| m.as_str()).unwrap_or("absent")
        ),
    );

    let gap = trace.event_time(EventKind::MarkingGapEntry);
    let lc_end = timeline.lane_change_start + LANE_CHANGE_DURATION;
    put(
        2,
        Answer::from_bool(
            gap.is_some_and(|t| {
                t >= timeline.lane_change_start - TIME_EPS && t <= lc_end + TIME_EPS
            }),
        ),
        format!(
            "marking gap entry {}, lane change {:.2}-{:.2} s",
            at(gap),
            timeline.lane_change_start,
            lc_end
        ),
    );

    let warning = trace.event_time(EventKind::Warning);
    put(
        3,
        Answer::from_bool(within_dt(warning, timeline.warning_time)),
        format!(
            "WARNING {}, expected {:.2} s",
            at(warning),
            timeline.warning_time
        ),
    );

    let tor = trace.event_time(EventKind::Tor);
    put(
        4,
        Answer::from_bool(within_dt(tor, timeline.tor_time)),
        format!("TOR {}, expected {:.2} s", at(tor), timeline.tor_time),
    );

    let took_over = record.took_over();
    put(
        5,
        Answer::from_bool(took_over),
        format!("TAKE_OVER {}", at(trace.takeover_time())),
    );

    let mrm = trace.event_time(EventKind::MrmStart);
    put(
        6,
        if took_over {
            Answer::NotApplicable
        } else {
            Answer::from_bool(mrm.is_some())
        },
        format!("MRM_START {}", at(mrm)),
    );

    put(
        7,
        if took_over {
            Answer::from_bool(record.del_to == 0)
        } else {
            Answer::NotApplicable
        },
        format!("delta_T2 = {:.4} s", record.delta_t2),
    );

    put(
        8,
        if took_over {
            Answer::from_bool(labels.steer_class != SteerClass::Ok)
        } else {
            Answer::NotApplicable
        },
        format!(
            "steering {}, SWA = {:.4} deg",
            labels.steer_class, record.swa
        ),
    );

    let hazard = trace.first_hazard();
    put(
        9,
        Answer::from_bool(record.hazard()),
        match hazard {
            Some(e) => format!("{} at t = {:.2} s", e.kind, e.t),
            None => "no lane departure".to_string(),
        },
    );

    put(
        10,
        match labels.controllability {
            Controllability::NotApplicable => Answer::NotApplicable,
            c => Answer::from_bool(c == Controllability::Provided),
        },
        format!("controllability {}", labels.controllability),
    );

    Ok(ChecklistResult { answers, evidence })
}

/// Applies the criteria to every result. Returns the series verdict and one
/// verdict per result.
pub fn series_verdict(
    results: &[ChecklistResult],
    criteria: &BTreeMap<u8, Requirement>,
) -> (bool, Vec<bool>) {
    let per_case: Vec<bool> = results
        .iter()
        .map(|r| criteria.iter().all(|(id, req)| req.accepts(r.answer(*id))))
        .collect();
    (per_case.iter().all(|&p| p), per_case)
}
