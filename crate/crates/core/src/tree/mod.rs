//! The piecewise-linear range-query tree.
//!
//! Leaves correspond one-to-one to fitted PL intervals and carry a frequency
//! and a slope; inner nodes carry interval frequencies. Nodes live in an
//! arena with the root at index 0. Intervals are 1-based and inclusive.

mod alloc;
mod build;
mod pipeline;
mod query;
mod refine;
mod variance;

pub use alloc::UserAssignment;
pub use build::{build_structure, node_weight, Skeleton};
pub use pipeline::{build_tree, collect_phase1, split_phases, TreeConfig};
pub use query::segment_range_sum;
pub use refine::project_children;
pub use variance::{propagate_weights, weighted_variance, LedgerScalar, LedgerShape, VarianceLedger};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::PLFunction;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeNode {
    /// Inclusive bucket range.
    pub interval: (usize, usize),
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Phase-1 interval mass (leaves only).
    pub freq_sw: Option<f64>,
    /// Phase-2 OUE estimate (non-root nodes).
    pub freq_oue: Option<f64>,
    /// After weighted averaging.
    pub freq_avg: f64,
    /// After frequency consistency.
    pub freq_final: f64,
    /// Slope from the PL fit (leaves only).
    pub slope_fit: Option<f64>,
    /// Refined slope (leaves only).
    pub slope: Option<f64>,
    /// Expected share of all users allocated to this node.
    pub alloc_ratio: f64,
    pub subtree_height: usize,
    pub n_users: usize,
    pub var_oue: f64,
    pub var_sw: Option<f64>,
    pub var_avg: f64,
    /// Weight on the node's own estimate during averaging.
    pub theta: f64,
    pub in_d_plus: bool,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn width(&self) -> usize {
        self.interval.1 - self.interval.0 + 1
    }
}

/// A PL tree over the domain `[1, d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SerialTree", try_from = "SerialTree")]
pub struct PriPLTree {
    pub nodes: Vec<TreeNode>,
    pub d: usize,
    pub epsilon: f64,
    /// Users in the phase-1 (SW) population.
    pub n_phase1: usize,
    /// Users in the phase-2 (OUE) population.
    pub n_phase2: usize,
}

impl PriPLTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Total population, both phases.
    pub fn n_users(&self) -> usize {
        self.n_phase1 + self.n_phase2
    }

    /// Leaf ids in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        self.preorder()
            .into_iter()
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.nodes[i].children.iter().rev());
        }
        out
    }

    pub fn postorder(&self) -> Vec<usize> {
        fn walk(t: &PriPLTree, i: usize, out: &mut Vec<usize>) {
            for &c in &t.nodes[i].children {
                walk(t, c, out);
            }
            out.push(i);
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        walk(self, 0, &mut out);
        out
    }

    pub fn level_order(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.nodes[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    /// Leaf breakpoints as a 1-based cut list `s_0 … s_K`.
    pub fn breakpoints(&self) -> Vec<usize> {
        let leaves = self.leaves();
        let mut pts: Vec<usize> = leaves.iter().map(|&l| self.nodes[l].interval.0).collect();
        pts.push(self.d);
        pts
    }

    /// Loads leaf masses and slopes from a PL fit with the same breakpoints.
    pub fn set_fit(&mut self, pl: &PLFunction) -> Result<()> {
        let leaves = self.leaves();
        if pl.segments() != leaves.len() || pl.breakpoints.points() != self.breakpoints().as_slice() {
            return Err(Error::InvalidConfig(
                "PL breakpoints do not match tree leaves".into(),
            ));
        }
        for (k, &leaf) in leaves.iter().enumerate() {
            self.nodes[leaf].freq_sw = Some(pl.interval_freqs[k]);
            self.nodes[leaf].slope_fit = Some(pl.beta[k + 1]);
        }
        Ok(())
    }

    /// Recomputes subtree heights (a leaf has height 1).
    pub(crate) fn refresh_heights(&mut self) {
        for i in self.postorder() {
            let h = self.nodes[i]
                .children
                .iter()
                .map(|&c| self.nodes[c].subtree_height)
                .max()
                .unwrap_or(0)
                + 1;
            self.nodes[i].subtree_height = h;
        }
    }
}

/// Nested on-disk form of a tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SerialNode {
    interval: [usize; 2],
    freq_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope_fit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_sw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_oue: Option<f64>,
    #[serde(default)]
    freq_avg: f64,
    #[serde(default)]
    alloc_ratio: f64,
    #[serde(default)]
    n_users: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<SerialNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SerialTree {
    d: usize,
    epsilon: f64,
    n_phase1: usize,
    n_phase2: usize,
    root: SerialNode,
}

impl From<PriPLTree> for SerialTree {
    fn from(t: PriPLTree) -> Self {
        fn nest(t: &PriPLTree, i: usize) -> SerialNode {
            let n = &t.nodes[i];
            SerialNode {
                interval: [n.interval.0, n.interval.1],
                freq_final: n.freq_final,
                slope: n.slope,
                slope_fit: n.slope_fit,
                freq_sw: n.freq_sw,
                freq_oue: n.freq_oue,
                freq_avg: n.freq_avg,
                alloc_ratio: n.alloc_ratio,
                n_users: n.n_users,
                children: n.children.iter().map(|&c| nest(t, c)).collect(),
            }
        }
        SerialTree {
            d: t.d,
            epsilon: t.epsilon,
            n_phase1: t.n_phase1,
            n_phase2: t.n_phase2,
            root: nest(&t, 0),
        }
    }
}

impl TryFrom<SerialTree> for PriPLTree {
    type Error = Error;

    fn try_from(s: SerialTree) -> Result<Self> {
        fn flatten(node: SerialNode, parent: Option<usize>, out: &mut Vec<TreeNode>) -> Result<usize> {
            let id = out.len();
            out.push(TreeNode {
                interval: (node.interval[0], node.interval[1]),
                parent,
                freq_sw: node.freq_sw,
                freq_oue: node.freq_oue,
                freq_avg: node.freq_avg,
                freq_final: node.freq_final,
                slope_fit: node.slope_fit,
                slope: node.slope,
                alloc_ratio: node.alloc_ratio,
                n_users: node.n_users,
                ..TreeNode::default()
            });
            let mut expect = node.interval[0];
            for child in node.children {
                if child.interval[0] != expect || child.interval[1] < child.interval[0] {
                    return Err(Error::InvalidConfig(format!(
                        "child interval {:?} does not continue tiling at {expect}",
                        child.interval
                    )));
                }
                expect = child.interval[1] + 1;
                let c = flatten(child, Some(id), out)?;
                out[id].children.push(c);
            }
            if !out[id].children.is_empty() && expect != node.interval[1] + 1 {
                return Err(Error::InvalidConfig(format!(
                    "children do not cover {:?}",
                    node.interval
                )));
            }
            Ok(id)
        }
        if s.root.interval != [1, s.d] {
            return Err(Error::InvalidConfig("root must span [1, d]".into()));
        }
        let mut nodes = Vec::new();
        flatten(s.root, None, &mut nodes)?;
        let mut tree = PriPLTree {
            nodes,
            d: s.d,
            epsilon: s.epsilon,
            n_phase1: s.n_phase1,
            n_phase2: s.n_phase2,
        };
        tree.refresh_heights();
        Ok(tree)
    }
}
