use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tree::{build_event_tree, EventTree, TreeNode};
use super::{
    contingency, controllability_rate, cpa_as_written, cpa_standard, fmem, joint_counts,
    ConsistencyFlag, ContingencyCounts, ControllabilityRate, Cpa, JointCounts, MetricsError, Ratio,
    ROW_LABELS,
};
use crate::classifier::{DetectorOutput, MisuseLabels, TestCaseRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub joint: JointCounts,
    pub percentages: [f64; 5],
    pub consistency_flags: Vec<ConsistencyFlag>,
    pub cpa_as_written: Cpa,
    pub cpa_standard: Cpa,
    pub contingency: ContingencyCounts,
    /// Absent when no detector outputs were supplied.
    pub fmem: Option<f64>,
    pub controllability: ControllabilityRate,
    pub tree: EventTree,
}

/// Computes every metric over one set of labelled cases. `detector` may be
/// empty, in which case the contingency table stays empty and FMEM is
/// absent.
pub fn build_report(
    cases: &[(MisuseLabels, TestCaseRecord)],
    detector: &[DetectorOutput],
) -> Result<ProbabilityReport, MetricsError> {
    let joint = joint_counts(cases)?;
    let labels: Vec<MisuseLabels> = cases.iter().map(|(l, _)| *l).collect();
    let table = if detector.is_empty() {
        ContingencyCounts::default()
    } else {
        contingency(&labels, detector)?
    };
    Ok(ProbabilityReport {
        percentages: joint.percentages(),
        consistency_flags: joint.consistency_flags(),
        cpa_as_written: cpa_as_written(&joint),
        cpa_standard: cpa_standard(&joint),
        contingency: table,
        fmem: fmem(&table).ok(),
        controllability: controllability_rate(&labels),
        tree: build_event_tree(cases)?,
        joint,
    })
}

fn two(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}"))
        .unwrap_or_else(|| "n/a".to_string())
}

fn flag(r: &Ratio) -> &'static str {
    match (r.valid, r.not_a_probability) {
        (false, _) => "INVALID (zero denominator)",
        (true, true) => "NOT_A_PROBABILITY",
        (true, false) => "ok",
    }
}

fn tree_lines(node: &TreeNode, out: &mut String) {
    node.walk(&mut |n, depth| {
        let _ = writeln!(
            out,
            "{}- {}: {} ({:.2})",
            "  ".repeat(depth),
            n.label,
            n.count,
            n.fraction
        );
    });
}

impl ProbabilityReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Probability analysis\n\n");
        let _ = writeln!(out, "Test cases: {}\n", self.joint.n_total);
        out.push_str("## Joint counts\n\n");
        out.push_str("| Probability condition | Number of test cases | Percentage |\n");
        out.push_str("|---|---|---|\n");
        for ((label, count), pct) in ROW_LABELS
            .iter()
            .zip(self.joint.rows())
            .zip(self.percentages)
        {
            let _ = writeln!(out, "| {label} | {count} | {pct:.2}% |");
        }
        if !self.consistency_flags.is_empty() {
            out.push_str("\nCount consistency warnings:\n\n");
            for f in &self.consistency_flags {
                let _ = writeln!(
                    out,
                    "- {} = {} exceeds {} = {}",
                    f.subset, f.subset_count, f.superset, f.superset_count
                );
            }
        }

        out.push_str("\n## Conditional probability analysis\n\n");
        out.push_str(
            "| Quantity | Likelihood ratio (as published) | Flag | Conditional probability | Flag |\n",
        );
        out.push_str("|---|---|---|---|---|\n");
        let names = [
            "P(MJ \\| TO <= 1.77 s, H)",
            "P(MJ \\| TO > 1.77 s, H)",
            "P(FR \\| TO > 1.77 s, H)",
        ];
        for ((name, w), s) in names
            .iter()
            .zip(self.cpa_as_written.ratios())
            .zip(self.cpa_standard.ratios())
        {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} | {} |",
                two(w.value),
                flag(&w),
                two(s.value),
                flag(&s)
            );
        }

        out.push_str("\n## FMEM\n\n");
        let c = &self.contingency;
        let _ = writeln!(
            out,
            "TP = {}, FP = {}, TN = {}, FN = {}\n",
            c.tp, c.fp, c.tn, c.fn_
        );
        let _ = writeln!(out, "FMEM = {}\n", two(self.fmem));

        out.push_str("## Controllability\n\n");
        let r = &self.controllability;
        let _ = writeln!(
            out,
            "Provided: {}, not provided: {}, over {} take-over episodes\n",
            two(r.provided),
            two(r.not_provided),
            r.n_applicable
        );

        out.push_str("## Event tree\n\n");
        tree_lines(&self.tree.root, &mut out);
        let _ = writeln!(
            out,
            "\nEpisodes without take-over: {}\n",
            self.tree.non_takeover
        );

        out.push_str(
            "---\n\nTP, FP, TN and FN cross-tabulate the detector flag against the ground-truth \
             foreseeable-misuse label of each episode.\n",
        );
        out
    }
}
