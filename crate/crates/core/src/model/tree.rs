use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathspace::{Prefix, TimeGrid};

use super::kernel::build_kernel;
use super::{drift_eval, Branching, ControlSet, DriftSpec};

pub type NodeId = usize;

pub const DEFAULT_NODE_CAP: usize = 5_000_000;

/// Everything needed to expand a tree except the starting history.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub grid: TimeGrid,
    pub drift: DriftSpec,
    pub controls: ControlSet,
    pub branching: Branching,
    pub node_cap: usize,
}

/// Non-recombining control-expanded scenario tree.
///
/// Nodes are stored breadth-first. The children of a node form one contiguous
/// block of `|controls| · branching` entries ordered by `(control, outcome)`, so
/// child lookup is pure index arithmetic. Each node stores its latest state;
/// the full state prefix (root history plus the states along the branch) is
/// rebuilt on demand by [`ScenarioTree::prefix`].
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    spec: TreeSpec,
    dim: usize,
    offset: usize,
    history: Vec<f64>,
    level_start: Vec<usize>,
    states: Vec<f64>,
    parent: Vec<u32>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub nodes: usize,
    pub depth: usize,
    pub controls: usize,
    pub branching: usize,
}

/// Expands the full tree from `x0` at the start of `grid` with the default node cap.
pub fn expand_tree(
    grid: TimeGrid,
    x0: &[f64],
    drift: DriftSpec,
    controls: ControlSet,
    branching: Branching,
) -> Result<ScenarioTree> {
    let spec = TreeSpec {
        grid,
        drift,
        controls,
        branching,
        node_cap: DEFAULT_NODE_CAP,
    };
    ScenarioTree::expand(spec, x0)
}

impl ScenarioTree {
    /// Expands from a single initial state at grid node 0.
    pub fn expand(spec: TreeSpec, x0: &[f64]) -> Result<Self> {
        Self::expand_from(spec, x0, 0)
    }

    /// Expands from a stored history ending at grid node `offset`.
    ///
    /// `history` holds `(offset + 1) * dim` values; the drift and every
    /// node prefix see it as the path before the root.
    pub fn expand_from(spec: TreeSpec, history: &[f64], offset: usize) -> Result<Self> {
        spec.grid.validate()?;
        spec.drift.validate()?;
        let dim = spec.controls.dim();
        spec.branching.validate(dim)?;
        if offset > spec.grid.n_steps {
            return Err(Error::invalid(format!(
                "root node {offset} is past the grid end {}",
                spec.grid.n_steps
            )));
        }
        if history.len() != (offset + 1) * dim {
            return Err(Error::invalid(format!(
                "history needs {} values for dimension {dim}, got {}",
                (offset + 1) * dim,
                history.len()
            )));
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("history must be finite"));
        }
        let depth = spec.grid.n_steps - offset;
        let fan = spec.controls.len() * spec.branching.outcomes();
        let count = node_count(fan, depth);
        if count > spec.node_cap as u128 {
            return Err(Error::SizeLimit {
                what: "scenario tree nodes",
                count,
                limit: spec.node_cap as u128,
            });
        }
        let count = count as usize;
        if count > u32::MAX as usize {
            return Err(Error::SizeLimit {
                what: "scenario tree nodes",
                count: count as u128,
                limit: u32::MAX as u128,
            });
        }

        let weights = spec.branching.weights(dim);
        let dt = spec.grid.dt();
        let mut tree = ScenarioTree {
            dim,
            offset,
            history: history.to_vec(),
            level_start: vec![0, 1],
            states: Vec::with_capacity(count * dim),
            parent: Vec::with_capacity(count),
            weights,
            spec,
        };
        tree.states.extend_from_slice(&history[offset * dim..]);
        tree.parent.push(u32::MAX);

        let mut prefix = Vec::new();
        let mut drift_step = vec![0.0; dim];
        for level in 0..depth {
            let nodes = tree.level(level);
            for node in nodes {
                tree.prefix_into(node, &mut prefix);
                let view = Prefix::new(&prefix, dim);
                let k = offset + level;
                for u in tree.spec.controls.iter() {
                    let b = drift_eval(&tree.spec.drift, k, view, u);
                    for (s, bi) in drift_step.iter_mut().zip(&b) {
                        *s = bi * dt;
                    }
                    let kernel = build_kernel(&drift_step, u, dt, tree.spec.branching);
                    for (inc, _) in kernel.support() {
                        let base = node * dim;
                        for (i, d) in inc.iter().enumerate() {
                            let x = tree.states[base + i] + d;
                            tree.states.push(x);
                        }
                        tree.parent.push(node as u32);
                    }
                }
            }
            tree.level_start.push(tree.parent.len());
        }
        debug_assert_eq!(tree.parent.len(), count);
        Ok(tree)
    }

    pub fn spec(&self) -> &TreeSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.spec.grid
    }

    pub fn controls(&self) -> &ControlSet {
        &self.spec.controls
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Grid index of the root node.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    /// Number of steps below the root.
    pub fn depth(&self) -> usize {
        self.level_start.len() - 2
    }

    pub fn n_controls(&self) -> usize {
        self.spec.controls.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.spec.branching.outcomes()
    }

    /// Children per interior node.
    pub fn fan(&self) -> usize {
        self.n_controls() * self.n_outcomes()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn level(&self, depth: usize) -> Range<NodeId> {
        self.level_start[depth]..self.level_start[depth + 1]
    }

    pub fn leaves(&self) -> Range<NodeId> {
        self.level(self.depth())
    }

    pub fn depth_of(&self, node: NodeId) -> usize {
        self.level_start.partition_point(|&s| s <= node) - 1
    }

    /// Grid index of a node.
    pub fn time_index(&self, node: NodeId) -> usize {
        self.offset + self.depth_of(node)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node >= self.level_start[self.level_start.len() - 2]
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        let p = self.parent[node];
        (p != u32::MAX).then_some(p as usize)
    }

    pub fn state(&self, node: NodeId) -> &[f64] {
        &self.states[node * self.dim..(node + 1) * self.dim]
    }

    /// First child of an interior node.
    pub fn first_child(&self, node: NodeId) -> NodeId {
        let depth = self.depth_of(node);
        self.level_start[depth + 1] + (node - self.level_start[depth]) * self.fan()
    }

    pub fn children(&self, node: NodeId) -> Range<NodeId> {
        let first = self.first_child(node);
        first..first + self.fan()
    }

    /// Children reached under control index `control`, ordered by outcome.
    pub fn children_under(&self, node: NodeId, control: usize) -> Range<NodeId> {
        let b = self.n_outcomes();
        let first = self.first_child(node) + control * b;
        first..first + b
    }

    /// Control and outcome that lead from the parent to `node`.
    pub fn edge_of(&self, node: NodeId) -> Option<(usize, usize)> {
        let parent = self.parent(node)?;
        let rel = node - self.first_child(parent);
        Some((rel / self.n_outcomes(), rel % self.n_outcomes()))
    }

    /// Root-to-node path (inclusive).
    pub fn path_to(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Descendants of `node` that sit `steps` levels below it; always contiguous.
    pub fn descendants(&self, node: NodeId, steps: usize) -> Range<NodeId> {
        let depth = self.depth_of(node);
        let mut lo = node;
        let mut width = 1usize;
        for d in depth..depth + steps {
            lo = self.level_start[d + 1] + (lo - self.level_start[d]) * self.fan();
            width *= self.fan();
        }
        lo..lo + width
    }

    pub fn ancestor_at_depth(&self, node: NodeId, depth: usize) -> NodeId {
        let mut cur = node;
        let mut d = self.depth_of(node);
        debug_assert!(depth <= d);
        while d > depth {
            cur = self.parent[cur] as usize;
            d -= 1;
        }
        cur
    }

    /// Writes the full state prefix (history then branch states) into `out`.
    pub fn prefix_into(&self, node: NodeId, out: &mut Vec<f64>) {
        out.clear();
        let depth = self.depth_of(node);
        out.resize((self.offset + depth + 1) * self.dim, 0.0);
        out[..self.offset * self.dim].copy_from_slice(&self.history[..self.offset * self.dim]);
        let mut cur = node;
        for i in (0..=depth).rev() {
            let at = (self.offset + i) * self.dim;
            out[at..at + self.dim].copy_from_slice(self.state(cur));
            if i > 0 {
                cur = self.parent[cur] as usize;
            }
        }
    }

    pub fn prefix(&self, node: NodeId) -> Vec<f64> {
        let mut out = Vec::new();
        self.prefix_into(node, &mut out);
        out
    }

    /// Branch states only, starting with the root state.
    pub fn branch_states(&self, node: NodeId) -> Vec<f64> {
        let full = self.prefix(node);
        full[self.offset * self.dim..].to_vec()
    }

    /// Probability of reaching `node` from the root given the control used at each ancestor.
    pub fn outcome_weight(&self, node: NodeId) -> f64 {
        let mut w = 1.0;
        let mut cur = node;
        while let Some(parent) = self.parent(cur) {
            let rel = cur - self.first_child(parent);
            w *= self.weights[rel % self.n_outcomes()];
            cur = parent;
        }
        w
    }

    pub fn summary(&self) -> TreeSummary {
        TreeSummary {
            nodes: self.n_nodes(),
            depth: self.depth(),
            controls: self.n_controls(),
            branching: self.n_outcomes(),
        }
    }
}

fn node_count(fan: usize, depth: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(fan as u128);
    }
    total
}
