//! Evaluation measures over labelled test cases: joint event counts, the
//! conditional-probability analysis, FMEM, the event tree and
//! controllability rates.
//!
//! Every operation is a pure function of its inputs and independent of the
//! order of the input list.

mod report;
mod tree;

pub use report::{build_report, ProbabilityReport};
pub use tree::{build_event_tree, EventTree, TreeNode};

use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_takeover, Controllability, DetectorOutput, MisuseLabels, TestCaseRecord,
    TAKEOVER_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {labels} labels vs {detector} detector outputs")]
    LengthMismatch { labels: usize, detector: usize },
    #[error("empty contingency table")]
    EmptyContingency,
}

/// Joint event counts.
///
/// The rows involving only take-over timing and hazard are read from the
/// record. The misjudgment and false-recognition rows take both the cause
/// and the timing condition from the labels (`mj`, `fr`, `del_to`) and the
/// hazard from the record, so label sets annotated independently of the
/// records can be counted. For simulator-generated inputs both sources
/// agree and the rows are nested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JointCounts {
    pub n_total: usize,
    /// TO occurred, delta_T2 < 1.77 s and H.
    pub n_to_le_h: usize,
    /// MJ, take-over in time and H.
    pub n_mj_to_le_h: usize,
    /// delta_T2 >= 1.77 s and H.
    pub n_to_gt_h: usize,
    /// MJ, delayed take-over and H.
    pub n_mj_to_gt_h: usize,
    /// FR, delayed take-over and H.
    pub n_fr_to_gt_h: usize,
}

/// A count that exceeds the count of an event it should be a subset of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyFlag {
    pub subset: String,
    pub subset_count: usize,
    pub superset: String,
    pub superset_count: usize,
}

pub const ROW_LABELS: [&str; 5] = [
    "P(TO <= 1.77 s ∩ H)",
    "P(MJ ∩ TO <= 1.77 s ∩ H)",
    "P(TO > 1.77 s ∩ H)",
    "P(MJ ∩ TO > 1.77 s ∩ H)",
    "P(FR ∩ TO > 1.77 s ∩ H)",
];

impl JointCounts {
    pub fn rows(&self) -> [usize; 5] {
        [
            self.n_to_le_h,
            self.n_mj_to_le_h,
            self.n_to_gt_h,
            self.n_mj_to_gt_h,
            self.n_fr_to_gt_h,
        ]
    }

    /// `100 * count / n_total` for each row.
    pub fn percentages(&self) -> [f64; 5] {
        self.rows().map(|c| {
            if self.n_total == 0 {
                0.0
            } else {
                100.0 * c as f64 / self.n_total as f64
            }
        })
    }

    pub fn consistency_flags(&self) -> Vec<ConsistencyFlag> {
        let pairs = [
            (1, self.n_mj_to_le_h, 0, self.n_to_le_h),
            (3, self.n_mj_to_gt_h, 2, self.n_to_gt_h),
            (4, self.n_fr_to_gt_h, 2, self.n_to_gt_h),
        ];
        pairs
            .into_iter()
            .filter(|&(_, sub, _, sup)| sub > sup)
            .map(|(i, sub, j, sup)| ConsistencyFlag {
                subset: ROW_LABELS[i].to_string(),
                subset_count: sub,
                superset: ROW_LABELS[j].to_string(),
                superset_count: sup,
            })
            .collect()
    }
}

pub fn joint_counts(cases: &[(MisuseLabels, TestCaseRecord)]) -> Result<JointCounts, MetricsError> {
    joint_counts_with(cases, TAKEOVER_THRESHOLD)
}

pub fn joint_counts_with(
    cases: &[(MisuseLabels, TestCaseRecord)],
    threshold: f64,
) -> Result<JointCounts, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = JointCounts {
        n_total: cases.len(),
        ..JointCounts::default()
    };
    for (labels, record) in cases {
        if !record.hazard() {
            continue;
        }
        let delayed = classify_takeover(record.delta_t2, threshold) == 1;
        if record.took_over() && !delayed {
            c.n_to_le_h += 1;
        }
        if delayed {
            c.n_to_gt_h += 1;
        }
        let labelled_delayed = labels.del_to == 1;
        if labels.mj == 1 && !labelled_delayed {
            c.n_mj_to_le_h += 1;
        }
        if labels.mj == 1 && labelled_delayed {
            c.n_mj_to_gt_h += 1;
        }
        if labels.fr == 1 && labelled_delayed {
            c.n_fr_to_gt_h += 1;
        }
    }
    Ok(c)
}

/// A ratio of two counts. `value` is absent when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: Option<f64>,
    pub valid: bool,
    /// Set when the value exceeds 1 and therefore cannot be a probability.
    pub not_a_probability: bool,
}

impl Ratio {
    pub fn of(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return Self {
                value: None,
                valid: false,
                not_a_probability: false,
            };
        }
        let value = numerator as f64 / denominator as f64;
        Self {
            value: Some(value),
            valid: true,
            not_a_probability: value > 1.0,
        }
    }
}

/// The three conditional quantities of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cpa {
    /// MJ given a take-over in time and a hazard.
    pub mj_given_in_time_h: Ratio,
    /// MJ given a delayed take-over and a hazard.
    pub mj_given_delayed_h: Ratio,
    /// FR given a delayed take-over and a hazard.
    pub fr_given_delayed_h: Ratio,
}

impl Cpa {
    pub fn ratios(&self) -> [Ratio; 3] {
        [
            self.mj_given_in_time_h,
            self.mj_given_delayed_h,
            self.fr_given_delayed_h,
        ]
    }
}

/// The ratios in their published arrangement: the joint count without the
/// cause divided by the joint count with it. This is the reciprocal of the
/// conditional probability and is reported as a likelihood ratio.
pub fn cpa_as_written(c: &JointCounts) -> Cpa {
    Cpa {
        mj_given_in_time_h: Ratio::of(c.n_to_le_h, c.n_mj_to_le_h),
        mj_given_delayed_h: Ratio::of(c.n_to_gt_h, c.n_mj_to_gt_h),
        fr_given_delayed_h: Ratio::of(c.n_to_gt_h, c.n_fr_to_gt_h),
    }
}

/// Standard conditional probabilities, `P(A | B) = n(A ∩ B) / n(B)`.
pub fn cpa_standard(c: &JointCounts) -> Cpa {
    Cpa {
        mj_given_in_time_h: Ratio::of(c.n_mj_to_le_h, c.n_to_le_h),
        mj_given_delayed_h: Ratio::of(c.n_mj_to_gt_h, c.n_to_gt_h),
        fr_given_delayed_h: Ratio::of(c.n_fr_to_gt_h, c.n_to_gt_h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ContingencyCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Cross-tabulates the detector flag against the ground-truth `fm` label.
pub fn contingency(
    labels: &[MisuseLabels],
    detector: &[DetectorOutput],
) -> Result<ContingencyCounts, MetricsError> {
    if labels.len() != detector.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            detector: detector.len(),
        });
    }
    let mut c = ContingencyCounts::default();
    for (l, d) in labels.iter().zip(detector) {
        match (l.fm == 1, d.fm_flagged == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Detector accuracy, `(TP + TN) / (TP + TN + FP + FN)`.
pub fn fmem(c: &ContingencyCounts) -> Result<f64, MetricsError> {
    match c.total() {
        0 => Err(MetricsError::EmptyContingency),
        total => Ok((c.tp + c.tn) as f64 / total as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityRate {
    pub provided: Option<f64>,
    pub not_provided: Option<f64>,
    pub n_applicable: usize,
}

/// Fractions of PROVIDED and NOT_PROVIDED among episodes with a take-over.
pub fn controllability_rate(labels: &[MisuseLabels]) -> ControllabilityRate {
    let provided = labels
        .iter()
        .filter(|l| l.controllability == Controllability::Provided)
        .count();
    let not_provided = labels
        .iter()
        .filter(|l| l.controllability == Controllability::NotProvided)
        .count();
    let n = provided + not_provided;
    ControllabilityRate {
        provided: (n > 0).then(|| provided as f64 / n as f64),
        not_provided: (n > 0).then(|| not_provided as f64 / n as f64),
        n_applicable: n,
    }
}
