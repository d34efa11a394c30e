use serde::{Deserialize, Serialize};

use crate::envelope::{tau_delta, within_stop_band, EnvelopeSolution, STOP_GUARD};
use crate::error::{Error, Result};
use crate::game::{for_each_strategy_until, ControlStrategy, PrefixTable, RuleSweep};
use crate::model::{NodeId, ScenarioTree};
use crate::numeric::{norm, pairwise_dot};

use super::{CheckReport, Tally, ENUMERATION_TOLERANCE};

/// A hitting time on the tree, used as a random horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HittingTime {
    Terminal,
    /// First node with grid index at least `index`.
    Fixed {
        index: usize,
    },
    /// First node whose state has norm at least `level`.
    Barrier {
        level: f64,
    },
    /// First node with `Z̄ ≤ Y + δ`.
    TauDelta {
        delta: f64,
    },
}

impl HittingTime {
    fn hits(&self, tree: &ScenarioTree, sol: &EnvelopeSolution, node: NodeId) -> bool {
        tree.is_leaf(node)
            || match *self {
                HittingTime::Terminal => false,
                HittingTime::Fixed { index } => tree.time_index(node) >= index,
                HittingTime::Barrier { level } => norm(tree.state(node)) >= level,
                HittingTime::TauDelta { delta } => {
                    within_stop_band(sol.z[node], sol.y[node], delta)
                }
            }
    }
}

fn check_shape(tree: &ScenarioTree, sol: &EnvelopeSolution) -> Result<()> {
    let n = tree.n_nodes();
    if sol.z.len() != n || sol.y.len() != n || sol.argmin.len() != n || sol.continuation.len() != n
    {
        return Err(Error::invalid("solution does not belong to this tree"));
    }
    Ok(())
}

/// `Z̄ ≥ Y` everywhere, `Z̄ = Y` at leaves, and the stored recursion
/// `Z̄ = max(Y, min_u E_u[Z̄_next])` reproduced exactly.
pub fn check_envelope_basic(tree: &ScenarioTree, sol: &EnvelopeSolution) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    let mut tally = Tally::new("envelope-basic", 0.0);
    let weights = tree.weights();
    let b = tree.n_outcomes();
    for node in 0..tree.n_nodes() {
        let (z, y) = (sol.z[node], sol.y[node]);
        tally.observe(y - z, || format!("Z >= Y at node {node}: Z = {z}, Y = {y}"));
        if tree.is_leaf(node) {
            tally.observe((z - y).abs(), || {
                format!("terminal Z = Y at node {node}: {z} vs {y}")
            });
            tally.observe(if sol.stop[node] { 0.0 } else { 1.0 }, || {
                format!("stop flag at leaf {node}")
            });
            continue;
        }
        let first = tree.first_child(node);
        let cont = (0..tree.n_controls())
            .map(|c| pairwise_dot(weights, &sol.z[first + c * b..first + (c + 1) * b]))
            .fold(f64::INFINITY, f64::min);
        let stored = sol.continuation[node].unwrap_or(f64::NAN);
        tally.observe((cont - stored).abs(), || {
            format!("continuation at node {node}: {stored} stored, {cont} recomputed")
        });
        tally.observe((z - y.max(cont)).abs(), || {
            format!(
                "Z = max(Y, continuation) at node {node}: {z} vs {}",
                y.max(cont)
            )
        });
    }
    Ok(tally.finish(format!("{} nodes", tree.n_nodes())))
}

/// `Z̄_node ≥ E̲_node[Z̄_τ]` for every node and every stopping rule.
pub fn check_supermartingale(tree: &ScenarioTree, sol: &EnvelopeSolution) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    let table = PrefixTable::new(tree);
    let mut sweep = RuleSweep::new(tree, &table, &sol.z, &[])?;
    let mut tally = Tally::new("supermartingale", ENUMERATION_TOLERANCE);
    let rules = sweep.n_rules();
    sweep.run(|s, changed| {
        for &n in changed {
            let v = s.value(n);
            tally.observe(v - sol.z[n], || {
                format!("node {n}: E[Z_tau] = {v} above Z = {}", sol.z[n])
            });
        }
    });
    Ok(tally.finish(format!("{rules} stopping rules")))
}

/// `Z̄*_node = E̲_node[Z̄*_τ]` for every rule at nodes strictly before `τ*`,
/// where `Z̄* = Z̄` stopped at `τ*`.
pub fn check_martingale_to_tau(tree: &ScenarioTree, sol: &EnvelopeSolution) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    let n = tree.n_nodes();
    let mut frozen = vec![false; n];
    let mut star = sol.z.clone();
    for node in 1..n {
        let parent = tree.parent(node).expect("non-root node");
        if frozen[parent] {
            star[node] = star[parent];
        }
        frozen[node] = frozen[parent] || sol.stop[node];
    }
    frozen[0] = sol.stop[0];
    let table = PrefixTable::new(tree);
    let mut sweep = RuleSweep::new(tree, &table, &star, &[])?;
    let mut tally = Tally::new("martingale-to-tau-star", ENUMERATION_TOLERANCE);
    let rules = sweep.n_rules();
    sweep.run(|s, changed| {
        for &node in changed.iter().filter(|&&node| !frozen[node]) {
            let v = s.value(node);
            tally.observe((v - sol.z[node]).abs(), || {
                format!("node {node}: E[Z*_tau] = {v} vs Z* = {}", sol.z[node])
            });
        }
    });
    let active = frozen.iter().filter(|f| !**f).count();
    Ok(tally.finish(format!(
        "{rules} stopping rules, {active} nodes before tau*"
    )))
}

/// `max(Y, E_μ[·])` under `strategy`, taking `Z̄` at the first node where `hit` holds.
fn horizon_value(
    tree: &ScenarioTree,
    sol: &EnvelopeSolution,
    strategy: &ControlStrategy,
    hit: &[bool],
    node: NodeId,
) -> f64 {
    if hit[node] {
        return sol.z[node];
    }
    let c = strategy
        .get(node)
        .expect("enumerated strategy covers the truncated tree");
    let children: Vec<f64> = tree
        .children_under(node, c)
        .map(|ch| horizon_value(tree, sol, strategy, hit, ch))
        .collect();
    sol.y[node].max(pairwise_dot(tree.weights(), &children))
}

fn truncated_game(
    name: &'static str,
    tree: &ScenarioTree,
    sol: &EnvelopeSolution,
    hit: &[bool],
) -> Result<CheckReport> {
    let mut best = f64::INFINITY;
    let count = for_each_strategy_until(tree, tree.root(), &|n| hit[n], |s| {
        best = best.min(horizon_value(tree, sol, s, hit, tree.root()));
    })?;
    let root = sol.root_value();
    let mut tally = Tally::new(name, ENUMERATION_TOLERANCE);
    tally.observe((best - root).abs(), || {
        format!("root Z = {root}, inf-sup of the truncated game = {best}")
    });
    Ok(tally.finish(format!(
        "{count} truncated strategies; inf-sup {best}, root Z {root}"
    )))
}

/// `Z̄_root = inf_μ sup_{τ ≤ s} E_μ[1_{τ<s} Y_τ + 1_{τ=s} Z̄_s]` at grid index `s`.
pub fn check_dpp(tree: &ScenarioTree, sol: &EnvelopeSolution, s: usize) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    if s < tree.offset() || s > tree.offset() + tree.depth() {
        return Err(Error::invalid(format!(
            "DPP time index {s} is outside the tree"
        )));
    }
    let hit: Vec<bool> = (0..tree.n_nodes())
        .map(|n| tree.is_leaf(n) || tree.time_index(n) >= s)
        .collect();
    truncated_game("dpp", tree, sol, &hit)
}

/// [`check_dpp`] with the horizon replaced by a hitting time `ν`.
pub fn check_dpp_random_horizon(
    tree: &ScenarioTree,
    sol: &EnvelopeSolution,
    nu: &HittingTime,
) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    let hit: Vec<bool> = (0..tree.n_nodes()).map(|n| nu.hits(tree, sol, n)).collect();
    truncated_game("dpp-random-horizon", tree, sol, &hit)
}

/// `τ_{1/n}` is nondecreasing in `n`, never later than `τ*`, and reaches
/// `τ*` once `1/n` drops below the smallest positive gap `Z̄ − Y`. Also
/// checks the solution's stored stopping indices against a recomputation.
pub fn check_tau_monotone(tree: &ScenarioTree, sol: &EnvelopeSolution) -> Result<CheckReport> {
    check_shape(tree, sol)?;
    let mut tally = Tally::new("tau-monotone", 0.0);
    let tau_star = tau_delta(tree, sol, 0.0)?;
    if sol.delta == 0.0 {
        for (i, (&a, &b)) in sol.tau.iter().zip(&tau_star).enumerate() {
            tally.observe((a as f64 - b as f64).abs(), || {
                format!("stored tau* {a} vs recomputed {b} on branch {i}")
            });
        }
    }
    // smallest δ that still separates a non-stopping node from the band
    let gap = (0..tree.n_nodes())
        .filter(|&n| !within_stop_band(sol.z[n], sol.y[n], 0.0))
        .map(|n| sol.z[n] - sol.y[n] - STOP_GUARD * (1.0 + sol.y[n].abs()))
        .fold(f64::INFINITY, f64::min);
    let mut prev: Option<Vec<usize>> = None;
    let mut n = 1u64;
    let mut steps = 0;
    loop {
        let delta = 1.0 / n as f64;
        let tau = tau_delta(tree, sol, delta)?;
        for (i, (&t, &star)) in tau.iter().zip(&tau_star).enumerate() {
            tally.observe(t as f64 - star as f64, || {
                format!("tau at delta {delta} later than tau* on branch {i}: {t} > {star}")
            });
            if let Some(p) = &prev {
                tally.observe(p[i] as f64 - t as f64, || {
                    format!(
                        "tau decreased at delta {delta} on branch {i}: {} -> {t}",
                        p[i]
                    )
                });
            }
        }
        steps += 1;
        if delta < gap || n >= 1 << 52 {
            for (i, (&t, &star)) in tau.iter().zip(&tau_star).enumerate() {
                tally.observe((t as f64 - star as f64).abs(), || {
                    format!("tau at delta {delta} has not reached tau* on branch {i}")
                });
            }
            break;
        }
        prev = Some(tau);
        n *= 2;
    }
    Ok(tally.finish(format!("{steps} values of delta, smallest gap {gap:e}")))
}

/// Re-expands the tree from the prefix of `node` and compares it with the
/// subtree below `node`, state for state and weight for weight.
pub fn check_shift_consistency(tree: &ScenarioTree, node: NodeId) -> Result<CheckReport> {
    let sub = ScenarioTree::expand_from(
        tree.spec().clone(),
        &tree.prefix(node),
        tree.time_index(node),
    )?;
    let mut tally = Tally::new("shift-consistency", 0.0);
    let below = tree.depth() - tree.depth_of(node);
    tally.observe((sub.depth() as f64 - below as f64).abs(), || "depth".into());
    if sub.depth() == below {
        for d in 0..=below {
            for (a, b) in tree.descendants(node, d).zip(sub.level(d)) {
                let diff = tree
                    .state(a)
                    .iter()
                    .zip(sub.state(b))
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                tally.observe(diff, || format!("state of node {a} vs shifted node {b}"));
            }
        }
        for (w, v) in tree.weights().iter().zip(sub.weights()) {
            tally.observe((w - v).abs(), || "outcome weights".into());
        }
    }
    Ok(tally.finish(format!(
        "subtree of node {node} with {} nodes",
        sub.n_nodes()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::robust_envelope;
    use crate::model::{expand_tree, Branching, ControlSet, DriftSpec};
    use crate::pathspace::TimeGrid;
    use crate::reward::{RewardFunctional, RewardKind};

    fn put_tree(n: usize, controls: &[f64]) -> (ScenarioTree, EnvelopeSolution) {
        let tree = expand_tree(
            TimeGrid::new(0.0, 1.0, n).unwrap(),
            &[0.0],
            DriftSpec::RunningMax { kappa: 0.5 },
            ControlSet::scalar(controls, 1.0).unwrap(),
            Branching::TWO_POINT,
        )
        .unwrap();
        let y = RewardFunctional::with_default_modulus(
            RewardKind::AmericanPut { strike: 1.0 },
            1.0,
            1.0,
        )
        .unwrap();
        let sol = robust_envelope(&tree, &y, 0.0).unwrap();
        (tree, sol)
    }

    fn one_step() -> (ScenarioTree, EnvelopeSolution) {
        let tree = expand_tree(
            TimeGrid::new(0.0, 1.0, 1).unwrap(),
            &[0.0],
            DriftSpec::zero(),
            ControlSet::scalar(&[0.5, 1.0], 1.0).unwrap(),
            Branching::TWO_POINT,
        )
        .unwrap();
        let y = RewardFunctional::with_default_modulus(RewardKind::TerminalAbs, 0.0, 1.0).unwrap();
        let sol = robust_envelope(&tree, &y, 0.0).unwrap();
        (tree, sol)
    }

    /// An interior node where the envelope is strictly above the reward.
    fn continuing_node(tree: &ScenarioTree, sol: &EnvelopeSolution) -> NodeId {
        (0..tree.leaves().start)
            .find(|&n| !sol.stop[n])
            .expect("some node continues")
    }

    #[test]
    fn all_pass_on_fixtures() {
        for (tree, sol) in [one_step(), put_tree(3, &[0.5, 1.0]), put_tree(2, &[0.75])] {
            assert!(check_envelope_basic(&tree, &sol).unwrap().passed);
            assert!(check_supermartingale(&tree, &sol).unwrap().passed);
            assert!(check_martingale_to_tau(&tree, &sol).unwrap().passed);
            assert!(check_tau_monotone(&tree, &sol).unwrap().passed);
            for s in 0..=tree.depth() {
                let r = check_dpp(&tree, &sol, s).unwrap();
                assert!(r.passed, "{}", r.detail);
            }
            for nu in [
                HittingTime::Terminal,
                HittingTime::Fixed { index: 1 },
                HittingTime::Barrier { level: 0.5 },
                HittingTime::TauDelta { delta: 0.0 },
                HittingTime::TauDelta { delta: 0.1 },
            ] {
                let r = check_dpp_random_horizon(&tree, &sol, &nu).unwrap();
                assert!(r.passed, "{nu:?}: {}", r.detail);
            }
            for node in [0, tree.n_nodes() / 2, tree.n_nodes() - 1] {
                assert!(check_shift_consistency(&tree, node).unwrap().passed);
            }
        }
    }

    #[test]
    fn basic_rejects_any_single_perturbation() {
        let (tree, sol) = put_tree(2, &[0.5, 1.0]);
        for node in [0, 3, tree.n_nodes() - 1] {
            for eps in [0.1, -0.1] {
                let mut bad = sol.clone();
                bad.z[node] += eps;
                assert!(!check_envelope_basic(&tree, &bad).unwrap().passed);
            }
        }
    }

    #[test]
    fn supermartingale_rejects_lowered_value() {
        let (tree, sol) = put_tree(3, &[0.5, 1.0]);
        let mut bad = sol.clone();
        bad.z[continuing_node(&tree, &sol)] -= 0.1;
        assert!(!check_supermartingale(&tree, &bad).unwrap().passed);
    }

    #[test]
    fn martingale_rejects_raised_value() {
        let (tree, sol) = one_step();
        let mut bad = sol.clone();
        bad.z[0] += 0.1;
        assert!(!check_martingale_to_tau(&tree, &bad).unwrap().passed);
    }

    #[test]
    fn dpp_rejects_corrupted_slice() {
        let (tree, sol) = one_step();
        let mut bad = sol.clone();
        for leaf in tree.leaves() {
            bad.z[leaf] += 0.1;
        }
        assert!(!check_dpp(&tree, &bad, 1).unwrap().passed);
        assert!(
            !check_dpp_random_horizon(&tree, &bad, &HittingTime::Terminal)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn tau_check_rejects_wrong_stored_times() {
        let (tree, sol) = one_step();
        let mut bad = sol.clone();
        bad.tau[2] = 0;
        assert!(!check_tau_monotone(&tree, &bad).unwrap().passed);
    }

    #[test]
    fn constant_reward_tau_is_root() {
        let tree = expand_tree(
            TimeGrid::new(0.0, 1.0, 2).unwrap(),
            &[0.0],
            DriftSpec::zero(),
            ControlSet::scalar(&[0.5, 1.0], 1.0).unwrap(),
            Branching::TWO_POINT,
        )
        .unwrap();
        let sol = robust_envelope(&tree, &RewardFunctional::constant(1.0), 0.0).unwrap();
        let r = check_tau_monotone(&tree, &sol).unwrap();
        assert!(r.passed);
        assert!(sol.tau.iter().all(|&t| t == 0));
        assert!(check_martingale_to_tau(&tree, &sol).unwrap().passed);
    }
}
