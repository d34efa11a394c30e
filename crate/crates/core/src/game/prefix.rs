use std::collections::HashMap;

use crate::model::{NodeId, ScenarioTree};

/// Interns the observed state prefixes of a tree.
///
/// Stopping decisions are keyed by the state path, not by the node: two nodes
/// reached through different controls but carrying the same state prefix must
/// receive the same decision. Ids are assigned in breadth-first node order, so
/// every non-terminal prefix has a smaller id than every terminal one.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    id_of_node: Vec<u32>,
    nodes_of: Vec<Vec<NodeId>>,
    n_nonterminal: usize,
}

impl PrefixTable {
    pub fn new(tree: &ScenarioTree) -> Self {
        let mut id_of_node = vec![0u32; tree.n_nodes()];
        let mut nodes_of: Vec<Vec<NodeId>> = Vec::new();
        let mut n_nonterminal = 0;
        for depth in 0..=tree.depth() {
            let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
            for node in tree.level(depth) {
                let key: Vec<u64> = tree
                    .branch_states(node)
                    .into_iter()
                    // +0.0 and -0.0 are the same observation
                    .map(|v| if v == 0.0 { 0 } else { v.to_bits() })
                    .collect();
                let next = nodes_of.len() as u32;
                let id = *seen.entry(key).or_insert(next);
                if id == next {
                    nodes_of.push(Vec::new());
                }
                nodes_of[id as usize].push(node);
                id_of_node[node] = id;
            }
            if depth < tree.depth() {
                n_nonterminal = nodes_of.len();
            }
        }
        Self {
            id_of_node,
            nodes_of,
            n_nonterminal,
        }
    }

    pub fn id(&self, node: NodeId) -> usize {
        self.id_of_node[node] as usize
    }

    pub fn len(&self) -> usize {
        self.nodes_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes_of.is_empty()
    }

    /// Prefixes at which the stopper actually has a choice.
    pub fn n_nonterminal(&self) -> usize {
        self.n_nonterminal
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        id >= self.n_nonterminal
    }

    pub fn nodes(&self, id: usize) -> &[NodeId] {
        &self.nodes_of[id]
    }

    /// A representative node for a prefix.
    pub fn node(&self, id: usize) -> NodeId {
        self.nodes_of[id][0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expand_tree, Branching, ControlSet, DriftSpec};
    use crate::pathspace::TimeGrid;

    #[test]
    fn distinct_prefixes_without_collisions() {
        let tree = expand_tree(
            TimeGrid::new(0.0, 1.0, 2).unwrap(),
            &[0.0],
            DriftSpec::zero(),
            ControlSet::scalar(&[0.5, 1.0], 1.0).unwrap(),
            Branching::TWO_POINT,
        )
        .unwrap();
        let t = PrefixTable::new(&tree);
        assert_eq!(t.len(), tree.n_nodes());
        assert_eq!(t.n_nonterminal(), 5);
    }

    #[test]
    fn trinomial_middle_branches_collide() {
        let tree = expand_tree(
            TimeGrid::new(0.0, 1.0, 1).unwrap(),
            &[0.0],
            DriftSpec::zero(),
            ControlSet::scalar(&[0.5, 1.0], 1.0).unwrap(),
            Branching(3),
        )
        .unwrap();
        let t = PrefixTable::new(&tree);
        // leaves: +a, 0, -a, +b, 0, -b → five distinct observations
        assert_eq!(t.len(), 1 + 5);
        assert_eq!(t.id(2), t.id(5));
        assert_eq!(t.nodes(t.id(2)), &[2, 5]);
    }
}
