use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::{classic_snell_with_rewards, robust_envelope_with_rewards};
use crate::error::Result;
use crate::model::ScenarioTree;
use crate::numeric::CompensatedSum;
use crate::reward::{tree_rewards, RewardFunctional};

use super::rules::{check_rule_bits, for_each_strategy, RuleSweep};
use super::{ControlStrategy, PrefixTable, StoppingRule};

/// Agreement tolerance between the enumerated values and the recursion.
pub const GAME_TOLERANCE: f64 = 1e-9;

/// Free prefixes fixed per shard when sweeping rules in parallel.
const SHARD_BITS: usize = 6;

/// `μ*` and `τ*` with `E_{μ*}[Y_{τ*}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddlePoint {
    /// Control index per node reached under `μ*`, `None` elsewhere.
    pub controls: Vec<Option<usize>>,
    /// `τ*` grid index per leaf branch.
    pub tau: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameReport {
    /// `max_τ min_μ E_μ[Y_τ]`.
    pub lower: f64,
    /// `min_μ max_τ E_μ[Y_τ]`.
    pub upper: f64,
    pub envelope_root: f64,
    /// `min_μ E_μ[Y_{τ*}]`.
    pub value_at_tau_star: f64,
    pub saddle: Option<SaddlePoint>,
    pub rules_enumerated: u64,
    pub strategies_enumerated: u64,
    /// `lower ≤ upper`, compared exactly.
    pub minimax_ordered: bool,
    /// Largest pairwise difference among the four values.
    pub max_gap: f64,
    pub agree: bool,
}

/// A tree with its rewards and interned prefixes, shared by the oracle queries.
pub struct Game<'a> {
    tree: &'a ScenarioTree,
    table: PrefixTable,
    rewards: Vec<f64>,
}

impl<'a> Game<'a> {
    pub fn new(tree: &'a ScenarioTree, y: &RewardFunctional) -> Self {
        Self::with_rewards(tree, tree_rewards(tree, y))
    }

    pub fn with_rewards(tree: &'a ScenarioTree, rewards: Vec<f64>) -> Self {
        Self {
            tree,
            table: PrefixTable::new(tree),
            rewards,
        }
    }

    pub fn tree(&self) -> &ScenarioTree {
        self.tree
    }

    pub fn table(&self) -> &PrefixTable {
        &self.table
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// `E_μ[Y_τ]` by a forward sweep over the nodes reached before stopping.
    pub fn expected_reward(&self, strategy: &ControlStrategy, rule: &StoppingRule) -> Result<f64> {
        let tree = self.tree;
        let mut total = CompensatedSum::new();
        let mut stack = vec![(tree.root(), 1.0)];
        while let Some((node, weight)) = stack.pop() {
            if tree.is_leaf(node) || rule.stops(&self.table, node) {
                total.add(weight * self.rewards[node]);
                continue;
            }
            let c = strategy
                .get(node)
                .ok_or(crate::Error::IncompleteStrategy(node))?;
            for (j, child) in tree.children_under(node, c).enumerate() {
                stack.push((child, weight * tree.weights()[j]));
            }
        }
        Ok(total.value())
    }

    /// `max_τ min_μ E_μ[Y_τ]` with the maximizing rule and the number of rules visited.
    ///
    /// For a fixed rule the inner minimum is attained node by node, so it is
    /// evaluated by backward induction instead of enumerating strategies.
    pub fn lower_value(&self) -> Result<(f64, StoppingRule, u64)> {
        let free = self.table.n_nonterminal();
        check_rule_bits(free)?;
        let shard_bits = free.min(SHARD_BITS);
        // pin the last prefixes: they sit deepest and flip least often
        let pinned: Vec<usize> = (free - shard_bits..free).collect();
        let shards: Vec<(f64, StoppingRule, u64)> = (0..1u64 << shard_bits)
            .into_par_iter()
            .map(|shard| {
                let mut fixed = vec![None; self.table.len()];
                for (bit, &id) in pinned.iter().enumerate() {
                    fixed[id] = Some((shard >> bit) & 1 == 1);
                }
                let mut sweep = RuleSweep::new(self.tree, &self.table, &self.rewards, &fixed)
                    .expect("shard is within the rule cap");
                let mut best = f64::NEG_INFINITY;
                let mut best_rule = None;
                let mut count = 0u64;
                sweep.run(|s, _| {
                    count += 1;
                    let v = s.value(0);
                    if v > best {
                        best = v;
                        best_rule = Some(s.rule());
                    }
                });
                (best, best_rule.expect("at least one rule"), count)
            })
            .collect();
        let count = shards.iter().map(|s| s.2).sum();
        // first shard wins ties, so the reported rule is thread-count independent
        let (best, rule, _) = shards
            .into_iter()
            .reduce(|a, b| if b.0 > a.0 { b } else { a })
            .expect("at least one shard");
        Ok((best, rule, count))
    }

    /// `min_μ max_τ E_μ[Y_τ]` via the classic Snell envelope of each strategy.
    pub fn upper_value(&self) -> Result<(f64, ControlStrategy, u64)> {
        let mut best = f64::INFINITY;
        let mut best_strategy = None;
        let mut failure = None;
        let count = for_each_strategy(self.tree, self.tree.root(), |s| {
            if failure.is_some() {
                return;
            }
            match classic_snell_with_rewards(self.tree, s, &self.rewards, 0, 0.0) {
                Ok(v) if v.root_value() < best => {
                    best = v.root_value();
                    best_strategy = Some(s.clone());
                }
                Ok(_) => {}
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((best, best_strategy.expect("at least one strategy"), count))
    }

    /// `min_μ E_μ[Y_τ]` over all strategies for a fixed rule.
    pub fn min_over_strategies(&self, rule: &StoppingRule) -> Result<f64> {
        let mut best = f64::INFINITY;
        let mut failure = None;
        for_each_strategy(self.tree, self.tree.root(), |s| {
            match self.expected_reward(s, rule) {
                Ok(v) => best = best.min(v),
                Err(e) => failure = Some(e),
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(best),
        }
    }

    pub fn values(&self) -> Result<GameReport> {
        let sol = robust_envelope_with_rewards(self.tree, self.rewards.clone(), 0.0)?;
        let (upper, _, strategies_enumerated) = self.upper_value()?;
        let (lower, _, rules_enumerated) = self.lower_value()?;
        let tau_star = StoppingRule::from_node_flags(self.tree, &self.table, &sol.stop)?;
        let value_at_tau_star = self.min_over_strategies(&tau_star)?;
        let envelope_root = sol.root_value();

        let mu_star = sol.argmin_strategy();
        let at_saddle = self.expected_reward(&mu_star, &tau_star)?;
        let saddle = ((at_saddle - envelope_root).abs() <= GAME_TOLERANCE).then(|| {
            let mut controls = vec![None; self.tree.n_nodes()];
            for node in mu_star
                .reachable(self.tree)
                .expect("argmin strategy is total")
            {
                controls[node] = mu_star.get(node);
            }
            SaddlePoint {
                controls,
                tau: sol.tau.clone(),
                value: at_saddle,
            }
        });

        let all = [lower, upper, envelope_root, value_at_tau_star];
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let max_gap = hi - lo;
        Ok(GameReport {
            lower,
            upper,
            envelope_root,
            value_at_tau_star,
            saddle,
            rules_enumerated,
            strategies_enumerated,
            minimax_ordered: lower <= upper,
            max_gap,
            agree: lower <= upper && max_gap <= GAME_TOLERANCE,
        })
    }
}

/// `E_μ[Y_τ]` on the tree.
pub fn expected_reward(
    tree: &ScenarioTree,
    strategy: &ControlStrategy,
    rule: &StoppingRule,
    y: &RewardFunctional,
) -> Result<f64> {
    Game::new(tree, y).expected_reward(strategy, rule)
}

/// Lower, upper, envelope and `τ*` values of the controller-stopper game by full enumeration.
pub fn game_values(tree: &ScenarioTree, y: &RewardFunctional) -> Result<GameReport> {
    Game::new(tree, y).values()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::classic_snell;
    use crate::model::{expand_tree, Branching, ControlSet, DriftSpec};
    use crate::pathspace::TimeGrid;
    use crate::reward::RewardKind;

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

    fn terminal_abs() -> RewardFunctional {
        RewardFunctional::with_default_modulus(RewardKind::TerminalAbs, 0.0, 1.0).unwrap()
    }

    #[test]
    fn one_step_expected_rewards() {
        let t = tree(1, &[0.5, 1.0]);
        let game = Game::new(&t, &terminal_abs());
        let never = StoppingRule::from_mask(game.table(), 0);
        let at_root = StoppingRule::from_mask(game.table(), 1);
        let low = ControlStrategy::constant(&t, 0);
        let high = ControlStrategy::constant(&t, 1);
        assert_eq!(game.expected_reward(&high, &never).unwrap(), 1.0);
        assert_eq!(game.expected_reward(&low, &never).unwrap(), 0.5);
        assert_eq!(game.expected_reward(&high, &at_root).unwrap(), 0.0);
    }

    #[test]
    fn one_step_values() {
        let t = tree(1, &[0.5, 1.0]);
        let r = game_values(&t, &terminal_abs()).unwrap();
        assert_eq!(r.lower, 0.5);
        assert_eq!(r.upper, 0.5);
        assert_eq!(r.envelope_root, 0.5);
        assert_eq!(r.value_at_tau_star, 0.5);
        assert_eq!(r.rules_enumerated, 2);
        assert_eq!(r.strategies_enumerated, 2);
        assert!(r.agree);
        let saddle = r.saddle.unwrap();
        assert_eq!(saddle.controls[0], Some(0));
        assert_eq!(saddle.tau, vec![1; 4]);
    }

    #[test]
    fn constant_reward() {
        let t = tree(2, &[0.5, 1.0]);
        let r = game_values(&t, &RewardFunctional::constant(2.5)).unwrap();
        for v in [r.lower, r.upper, r.envelope_root, r.value_at_tau_star] {
            assert_eq!(v, 2.5);
        }
    }

    #[test]
    fn singleton_family_is_classic_snell() {
        let t = tree(3, &[0.75]);
        let y = RewardFunctional::with_default_modulus(
            RewardKind::AmericanPut { strike: 1.0 },
            1.0,
            1.0,
        )
        .unwrap();
        let r = game_values(&t, &y).unwrap();
        let classic = classic_snell(&t, &ControlStrategy::constant(&t, 0), &y, 0.0).unwrap();
        assert!((r.lower - classic.root_value()).abs() <= 1e-12);
        assert_eq!(r.upper, classic.root_value());
    }

    #[test]
    fn lower_value_matches_plain_enumeration() {
        let t = tree(2, &[0.5, 1.0]);
        let y = RewardFunctional::with_default_modulus(RewardKind::LookbackMax, 0.0, 1.0).unwrap();
        let game = Game::new(&t, &y);
        let mut best = f64::NEG_INFINITY;
        for rule in super::super::enumerate_stopping_rules(&t).unwrap() {
            best = best.max(game.min_over_strategies(&rule).unwrap());
        }
        let (lower, _, count) = game.lower_value().unwrap();
        assert_eq!(count, 32);
        assert!((lower - best).abs() <= 1e-12);
    }
}
