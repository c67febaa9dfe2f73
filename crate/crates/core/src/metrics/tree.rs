use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::classifier::{MisuseLabels, TestCaseRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    pub count: usize,
    /// Share of the parent's count; 0 when the parent is empty.
    pub fraction: f64,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    fn new(label: &str, count: usize, parent: usize) -> Self {
        Self {
            label: label.to_string(),
            count,
            fraction: if parent == 0 {
                0.0
            } else {
                count as f64 / parent as f64
            },
            children: Vec::new(),
        }
    }

    /// Depth-first visit of this node and all descendants.
    pub fn walk(&self, visit: &mut impl FnMut(&TreeNode, usize)) {
        self.walk_at(0, visit);
    }

    fn walk_at(&self, depth: usize, visit: &mut impl FnMut(&TreeNode, usize)) {
        visit(self, depth);
        for child in &self.children {
            child.walk_at(depth + 1, visit);
        }
    }

    pub fn child(&self, label: &str) -> Option<&TreeNode> {
        self.children.iter().find(|c| c.label == label)
    }
}

/// Probability tree over take-over episodes: take-over timing, then hazard,
/// then false recognition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTree {
    pub root: TreeNode,
    /// Episodes without a take-over, which do not enter the tree.
    pub non_takeover: usize,
}

pub const TIMELY: &str = "TO <= 1.77 s";
pub const DELAYED: &str = "TO > 1.77 s";
pub const HAZARD: &str = "H";
pub const NO_HAZARD: &str = "No H";
pub const FR: &str = "FR";
pub const NO_FR: &str = "No FR";

pub fn build_event_tree(
    cases: &[(MisuseLabels, TestCaseRecord)],
) -> Result<EventTree, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let takeovers: Vec<_> = cases.iter().filter(|(_, r)| r.took_over()).collect();
    let mut root = TreeNode::new("Take-over episodes", takeovers.len(), takeovers.len());
    root.fraction = 1.0;
    for (label, delayed) in [(TIMELY, false), (DELAYED, true)] {
        let timing: Vec<_> = takeovers
            .iter()
            .filter(|(_, r)| (r.del_to == 1) == delayed)
            .collect();
        let mut timing_node = TreeNode::new(label, timing.len(), root.count);
        for (label, hazard) in [(HAZARD, true), (NO_HAZARD, false)] {
            let cell: Vec<_> = timing
                .iter()
                .filter(|(_, r)| r.hazard() == hazard)
                .collect();
            let mut hazard_node = TreeNode::new(label, cell.len(), timing_node.count);
            let fr = cell.iter().filter(|(l, _)| l.fr == 1).count();
            hazard_node.children = vec![
                TreeNode::new(FR, fr, cell.len()),
                TreeNode::new(NO_FR, cell.len() - fr, cell.len()),
            ];
            timing_node.children.push(hazard_node);
        }
        root.children.push(timing_node);
    }
    Ok(EventTree {
        root,
        non_takeover: cases.len() - takeovers.len(),
    })
}
