use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NodeId, ScenarioTree};
use crate::numeric::pairwise_dot;

use super::{ControlStrategy, PrefixTable};

/// Largest number of free stopping decisions the enumerators accept.
pub const MAX_RULE_BITS: usize = 22;

/// Largest number of strategies the enumerators accept.
pub const MAX_STRATEGIES: u128 = 1 << 20;

/// Stop/continue decision per observed state prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StoppingRule {
    stop: Vec<bool>,
}

impl StoppingRule {
    /// Bit `i` of `mask` is the decision at non-terminal prefix `i`; terminal prefixes stop.
    pub fn from_mask(table: &PrefixTable, mask: u64) -> Self {
        let stop = (0..table.len())
            .map(|id| table.is_terminal(id) || (mask >> id) & 1 == 1)
            .collect();
        Self { stop }
    }

    /// Rule from a per-node flag, which must agree on nodes sharing a prefix.
    pub fn from_node_flags(
        tree: &ScenarioTree,
        table: &PrefixTable,
        flags: &[bool],
    ) -> Result<Self> {
        let mut stop = vec![false; table.len()];
        for (id, slot) in stop.iter_mut().enumerate() {
            let nodes = table.nodes(id);
            let first = flags[nodes[0]];
            if nodes.iter().any(|&n| flags[n] != first) {
                return Err(Error::invalid(format!(
                    "stop flags disagree on nodes {nodes:?} sharing one state prefix"
                )));
            }
            *slot = first || tree.is_leaf(nodes[0]);
        }
        Ok(Self { stop })
    }

    pub fn stops(&self, table: &PrefixTable, node: NodeId) -> bool {
        self.stop[table.id(node)]
    }

    pub fn stops_prefix(&self, id: usize) -> bool {
        self.stop[id]
    }

    /// Per-node stop mask.
    pub fn node_mask(&self, tree: &ScenarioTree, table: &PrefixTable) -> Vec<bool> {
        (0..tree.n_nodes()).map(|n| self.stops(table, n)).collect()
    }
}

/// Every stopping rule on the tree: `2^(non-terminal prefixes)` of them.
pub fn enumerate_stopping_rules(
    tree: &ScenarioTree,
) -> Result<impl Iterator<Item = StoppingRule> + '_> {
    let table = PrefixTable::new(tree);
    let bits = table.n_nonterminal();
    check_rule_bits(bits)?;
    Ok((0..1u64 << bits).map(move |mask| StoppingRule::from_mask(&table, mask)))
}

pub(crate) fn check_rule_bits(bits: usize) -> Result<()> {
    if bits > MAX_RULE_BITS {
        return Err(Error::SizeLimit {
            what: "stopping rules (2^prefixes)",
            count: 1u128 << bits.min(127),
            limit: 1u128 << MAX_RULE_BITS,
        });
    }
    Ok(())
}

/// Number of strategies reachable-consistent from `from`.
pub fn count_strategies(tree: &ScenarioTree, from: NodeId) -> u128 {
    let steps = tree.depth() - tree.depth_of(from);
    // every node at a given depth has the same count
    let mut count: u128 = 1;
    for _ in 0..steps {
        let per_control = count.saturating_pow(tree.n_outcomes() as u32);
        count = per_control.saturating_mul(tree.n_controls() as u128);
    }
    count
}

/// Calls `f` with every strategy defined exactly on the interior nodes it reaches from `from`.
pub fn for_each_strategy(
    tree: &ScenarioTree,
    from: NodeId,
    f: impl FnMut(&ControlStrategy),
) -> Result<u64> {
    let count = count_strategies(tree, from);
    check_strategy_count(count)?;
    let visited = enumerate(tree, from, &|_| false, f);
    debug_assert_eq!(visited as u128, count);
    Ok(visited)
}

/// [`for_each_strategy`] on the tree cut at the nodes where `halt` holds:
/// those nodes get no control and their subtrees are not entered.
pub fn for_each_strategy_until(
    tree: &ScenarioTree,
    from: NodeId,
    halt: &dyn Fn(NodeId) -> bool,
    f: impl FnMut(&ControlStrategy),
) -> Result<u64> {
    check_strategy_count(count_until(tree, from, halt))?;
    Ok(enumerate(tree, from, halt, f))
}

fn count_until(tree: &ScenarioTree, node: NodeId, halt: &dyn Fn(NodeId) -> bool) -> u128 {
    if tree.is_leaf(node) || halt(node) {
        return 1;
    }
    (0..tree.n_controls())
        .map(|c| {
            tree.children_under(node, c)
                .map(|ch| count_until(tree, ch, halt))
                .fold(1u128, u128::saturating_mul)
        })
        .fold(0u128, u128::saturating_add)
}

fn check_strategy_count(count: u128) -> Result<()> {
    if count > MAX_STRATEGIES {
        return Err(Error::SizeLimit {
            what: "control strategies",
            count,
            limit: MAX_STRATEGIES,
        });
    }
    Ok(())
}

fn enumerate(
    tree: &ScenarioTree,
    from: NodeId,
    halt: &dyn Fn(NodeId) -> bool,
    mut f: impl FnMut(&ControlStrategy),
) -> u64 {
    let mut strategy = ControlStrategy::empty(tree);
    let mut pending = Vec::new();
    if !tree.is_leaf(from) && !halt(from) {
        pending.push(from);
    }
    let mut visited = 0u64;
    assign(tree, halt, &mut pending, &mut strategy, &mut |s| {
        visited += 1;
        f(s)
    });
    visited
}

fn assign(
    tree: &ScenarioTree,
    halt: &dyn Fn(NodeId) -> bool,
    pending: &mut Vec<NodeId>,
    strategy: &mut ControlStrategy,
    f: &mut dyn FnMut(&ControlStrategy),
) {
    let Some(node) = pending.pop() else {
        f(strategy);
        return;
    };
    for c in 0..tree.n_controls() {
        strategy.set(node, c);
        let mark = pending.len();
        pending.extend(
            tree.children_under(node, c)
                .filter(|&ch| !tree.is_leaf(ch) && !halt(ch)),
        );
        assign(tree, halt, pending, strategy, f);
        pending.truncate(mark);
    }
    strategy.clear(node);
    pending.push(node);
}

/// All strategies from the root, materialized.
pub fn enumerate_strategies(tree: &ScenarioTree) -> Result<Vec<ControlStrategy>> {
    let mut out = Vec::new();
    for_each_strategy(tree, tree.root(), |s| out.push(s.clone()))?;
    Ok(out)
}

/// Incremental evaluation of `E̲_node[V_τ]` at every node while `τ` runs over
/// all stopping rules in Gray-code order.
///
/// `stop_value[node]` is what the stopper collects when stopping at `node`.
/// For a fixed rule the controller's best response is node-wise, so the value
/// is `stop_value` at stopping nodes and `min_u Σ_j w_j value(child)` elsewhere.
/// Flipping one prefix only changes the values of its nodes and their ancestors,
/// so each step touches a handful of nodes.
pub(crate) struct RuleSweep<'a> {
    tree: &'a ScenarioTree,
    table: &'a PrefixTable,
    stop_value: &'a [f64],
    free: Vec<usize>,
    stop: Vec<bool>,
    value: Vec<f64>,
    changed: Vec<NodeId>,
    buf: Vec<f64>,
}

impl<'a> RuleSweep<'a> {
    /// `fixed[id] = Some(stop)` pins a prefix; the remaining non-terminal
    /// prefixes are enumerated. An empty `fixed` pins nothing.
    pub fn new(
        tree: &'a ScenarioTree,
        table: &'a PrefixTable,
        stop_value: &'a [f64],
        fixed: &[Option<bool>],
    ) -> Result<Self> {
        let pinned = |id: usize| fixed.get(id).copied().flatten();
        let free: Vec<usize> = (0..table.n_nonterminal())
            .filter(|&id| pinned(id).is_none())
            .collect();
        check_rule_bits(free.len())?;
        let stop = (0..table.len())
            .map(|id| table.is_terminal(id) || pinned(id).unwrap_or(false))
            .collect();
        let mut sweep = Self {
            tree,
            table,
            stop_value,
            free,
            stop,
            value: vec![0.0; tree.n_nodes()],
            changed: Vec::new(),
            buf: Vec::with_capacity(tree.n_outcomes()),
        };
        for node in (0..tree.n_nodes()).rev() {
            sweep.value[node] = sweep.recompute(node);
        }
        Ok(sweep)
    }

    pub fn n_rules(&self) -> u64 {
        1u64 << self.free.len()
    }

    pub fn value(&self, node: NodeId) -> f64 {
        self.value[node]
    }

    /// Current rule as a stop flag per prefix.
    pub fn rule(&self) -> StoppingRule {
        StoppingRule {
            stop: self.stop.clone(),
        }
    }

    fn recompute(&mut self, node: NodeId) -> f64 {
        if self.tree.is_leaf(node) || self.stop[self.table.id(node)] {
            return self.stop_value[node];
        }
        let b = self.tree.n_outcomes();
        let first = self.tree.first_child(node);
        let weights = self.tree.weights();
        let mut best = f64::INFINITY;
        for c in 0..self.tree.n_controls() {
            let start = first + c * b;
            self.buf.clear();
            self.buf.extend_from_slice(&self.value[start..start + b]);
            best = best.min(pairwise_dot(weights, &self.buf));
        }
        best
    }

    /// Visits every rule. `visit` receives the sweep and the nodes whose value
    /// changed since the previous rule (all nodes on the first call).
    pub fn run(&mut self, mut visit: impl FnMut(&Self, &[NodeId])) {
        let all: Vec<NodeId> = (0..self.tree.n_nodes()).collect();
        visit(self, &all);
        for i in 1..self.n_rules() {
            let bit = i.trailing_zeros() as usize;
            let id = self.free[bit];
            self.stop[id] = !self.stop[id];
            self.changed.clear();
            for k in 0..self.table.nodes(id).len() {
                let node = self.table.nodes(id)[k];
                self.propagate(node);
            }
            let changed = std::mem::take(&mut self.changed);
            visit(self, &changed);
            self.changed = changed;
        }
    }

    fn propagate(&mut self, start: NodeId) {
        let mut node = start;
        loop {
            let v = self.recompute(node);
            if v.to_bits() == self.value[node].to_bits() {
                return;
            }
            self.value[node] = v;
            self.changed.push(node);
            match self.tree.parent(node) {
                Some(p) => node = p,
                None => return,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expand_tree, Branching, ControlSet, DriftSpec};
    use crate::pathspace::TimeGrid;

    fn tree(n: usize, controls: &[f64]) -> ScenarioTree {
        expand_tree(
            TimeGrid::new(0.0, 1.0, n).unwrap(),
            &[0.0],
            DriftSpec::zero(),
            ControlSet::scalar(controls, 1.0).unwrap(),
            Branching::TWO_POINT,
        )
        .unwrap()
    }

    #[test]
    fn rule_counts() {
        assert_eq!(
            enumerate_stopping_rules(&tree(1, &[1.0])).unwrap().count(),
            2
        );
        assert_eq!(
            enumerate_stopping_rules(&tree(1, &[0.5, 1.0]))
                .unwrap()
                .count(),
            2
        );
        assert_eq!(
            enumerate_stopping_rules(&tree(2, &[1.0])).unwrap().count(),
            8
        );
    }

    #[test]
    fn rules_are_distinct_and_stop_at_the_end() {
        let t = tree(2, &[1.0]);
        let rules: Vec<StoppingRule> = enumerate_stopping_rules(&t).unwrap().collect();
        let unique: std::collections::HashSet<_> = rules.iter().cloned().collect();
        assert_eq!(unique.len(), rules.len());
        let table = PrefixTable::new(&t);
        for r in &rules {
            assert!(t.leaves().all(|leaf| r.stops(&table, leaf)));
        }
    }

    #[test]
    fn strategy_counts() {
        assert_eq!(enumerate_strategies(&tree(2, &[1.0])).unwrap().len(), 1);
        assert_eq!(
            enumerate_strategies(&tree(1, &[0.5, 1.0])).unwrap().len(),
            2
        );
        assert_eq!(
            enumerate_strategies(&tree(2, &[0.5, 1.0])).unwrap().len(),
            8
        );
        assert_eq!(count_strategies(&tree(3, &[0.5, 1.0]), 0), 128);
    }

    #[test]
    fn enumerated_strategies_are_distinct_and_complete() {
        let t = tree(3, &[0.5, 1.0]);
        let all = enumerate_strategies(&t).unwrap();
        let unique: std::collections::HashSet<_> = all.iter().cloned().collect();
        assert_eq!(unique.len(), 128);
        for s in &all {
            let reached = s.reachable(&t).unwrap();
            let assigned = (0..t.n_nodes()).filter(|&n| s.get(n).is_some()).count();
            let interior = reached.iter().filter(|&&n| !t.is_leaf(n)).count();
            assert_eq!(assigned, interior);
        }
    }

    #[test]
    fn halting_cuts_the_enumeration() {
        let t = tree(3, &[0.5, 1.0]);
        let at_depth_one = |n: NodeId| t.depth_of(n) >= 1;
        assert_eq!(
            for_each_strategy_until(&t, 0, &at_depth_one, |_| {}).unwrap(),
            2
        );
        let at_two = |n: NodeId| t.depth_of(n) >= 2;
        assert_eq!(for_each_strategy_until(&t, 0, &at_two, |_| {}).unwrap(), 8);
        let never = |_: NodeId| false;
        assert_eq!(for_each_strategy_until(&t, 0, &never, |_| {}).unwrap(), 128);
    }

    #[test]
    fn too_many_prefixes_is_a_size_error() {
        let t = tree(5, &[0.5, 1.0]);
        assert!(matches!(
            enumerate_stopping_rules(&t).err(),
            Some(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn sweep_matches_fresh_evaluation() {
        let t = tree(2, &[0.5, 1.0]);
        let table = PrefixTable::new(&t);
        let payoff: Vec<f64> = (0..t.n_nodes())
            .map(|n| (t.state(n)[0] - 0.2).abs())
            .collect();
        let mut sweep = RuleSweep::new(&t, &table, &payoff, &[]).unwrap();
        let mut seen = 0;
        sweep.run(|s, _| {
            let fixed: Vec<Option<bool>> = s.rule().stop.iter().map(|&b| Some(b)).collect();
            let fresh = RuleSweep::new(&t, &table, &payoff, &fixed).unwrap();
            for n in 0..t.n_nodes() {
                assert_eq!(s.value(n).to_bits(), fresh.value(n).to_bits());
            }
            seen += 1;
        });
        assert_eq!(seen, 32);
    }
}
