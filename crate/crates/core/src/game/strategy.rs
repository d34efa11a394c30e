use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NodeId, ScenarioTree};

const UNSET: u32 = u32::MAX;

/// Node-wise control assignment (a discrete control process `μ`).
///
/// A strategy only has to be defined on the interior nodes it reaches from
/// the root under its own choices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ControlStrategy {
    choice: Vec<u32>,
}

impl ControlStrategy {
    pub fn empty(tree: &ScenarioTree) -> Self {
        Self {
            choice: vec![UNSET; tree.n_nodes()],
        }
    }

    /// The same control at every interior node.
    pub fn constant(tree: &ScenarioTree, control: usize) -> Self {
        let mut s = Self::empty(tree);
        for node in 0..tree.leaves().start {
            s.choice[node] = control as u32;
        }
        s
    }

    pub fn from_choices(choices: Vec<Option<usize>>) -> Self {
        Self {
            choice: choices
                .into_iter()
                .map(|c| c.map_or(UNSET, |c| c as u32))
                .collect(),
        }
    }

    pub fn get(&self, node: NodeId) -> Option<usize> {
        let c = self.choice[node];
        (c != UNSET).then_some(c as usize)
    }

    pub fn set(&mut self, node: NodeId, control: usize) {
        self.choice[node] = control as u32;
    }

    pub fn clear(&mut self, node: NodeId) {
        self.choice[node] = UNSET;
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    /// Nodes reached from `from` under this strategy, in breadth-first order.
    ///
    /// Fails if a reached interior node has no control.
    pub fn reachable_from(&self, tree: &ScenarioTree, from: NodeId) -> Result<Vec<NodeId>> {
        if self.choice.len() != tree.n_nodes() {
            return Err(Error::invalid("strategy does not belong to this tree"));
        }
        let mut out = vec![from];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            i += 1;
            if tree.is_leaf(node) {
                continue;
            }
            let c = self.get(node).ok_or(Error::IncompleteStrategy(node))?;
            if c >= tree.n_controls() {
                return Err(Error::invalid(format!(
                    "control index {c} out of range at node {node}"
                )));
            }
            out.extend(tree.children_under(node, c));
        }
        Ok(out)
    }

    pub fn reachable(&self, tree: &ScenarioTree) -> Result<Vec<NodeId>> {
        self.reachable_from(tree, tree.root())
    }
}
