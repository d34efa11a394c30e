//! Random small instances and a brute-force game oracle written against the
//! tree's public layout only.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robuststop::model::{expand_tree, Branching, ControlSet, DriftSpec, NodeId, ScenarioTree};
use robuststop::pathspace::TimeGrid;
use robuststop::reward::{RewardFunctional, RewardKind};

pub struct Instance {
    pub label: String,
    pub tree: ScenarioTree,
    pub reward: RewardFunctional,
}

fn round(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// d = 1, two-point branching, up to three steps and two controls, catalog rewards.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_steps = rng.random_range(1..=3);
    let n_controls = rng.random_range(1..=2);
    let mut controls: Vec<f64> = Vec::new();
    while controls.len() < n_controls {
        let u = round(rng.random_range(0.1..=1.0));
        if !controls.contains(&u) {
            controls.push(u);
        }
    }
    let drift = match rng.random_range(0..3) {
        0 => DriftSpec::zero(),
        1 => DriftSpec::MeanReversion {
            kappa: 1.0,
            rate: round(rng.random_range(0.0..=1.0)),
            level: round(rng.random_range(-0.5..=0.5)),
        },
        _ => DriftSpec::RunningMax {
            kappa: round(rng.random_range(0.2..=1.0)),
        },
    };
    let (kind, base) = match rng.random_range(0..5) {
        0 => (
            RewardKind::AmericanPut {
                strike: round(rng.random_range(0.8..=1.2)),
            },
            1.0,
        ),
        1 => (RewardKind::LookbackMax, round(rng.random_range(-0.5..=0.5))),
        2 => (RewardKind::TerminalAbs, round(rng.random_range(-0.5..=0.5))),
        3 => (
            RewardKind::RunningSum {
                scale: round(rng.random_range(0.5..=2.0)),
            },
            round(rng.random_range(-0.5..=0.5)),
        ),
        _ => (
            RewardKind::Constant {
                value: round(rng.random_range(-1.0..=1.0)),
            },
            0.0,
        ),
    };
    let label = format!("N={n_steps} u={controls:?} {drift:?} {kind:?} base={base}");
    let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
    let tree = expand_tree(
        grid,
        &[0.0],
        drift,
        ControlSet::scalar(&controls, 1.0).unwrap(),
        Branching::TWO_POINT,
    )
    .unwrap();
    let reward = RewardFunctional::with_default_modulus(kind, base, 1.0).unwrap();
    Instance {
        label,
        tree,
        reward,
    }
}

pub fn instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng)).collect()
}

/// Reward at a node, recomputed from the branch states.
pub fn reward_at(tree: &ScenarioTree, y: &RewardFunctional, node: NodeId) -> f64 {
    let levels: Vec<f64> = tree
        .path_to(node)
        .iter()
        .map(|&n| y.base + tree.state(n)[0])
        .collect();
    let k = levels.len() - 1;
    match &y.kind {
        RewardKind::AmericanPut { strike } => (strike - levels[k]).max(0.0),
        RewardKind::LookbackMax => levels.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        RewardKind::TerminalAbs => levels[k].abs(),
        RewardKind::RunningSum { scale } => {
            let dt = tree.grid().dt();
            scale * levels[..k].iter().map(|l| l.max(0.0) * dt).sum::<f64>()
        }
        RewardKind::Constant { value } => *value,
        RewardKind::CustomTable { .. } => unimplemented!("not drawn by the generator"),
    }
}

/// A strategy as a map from interior node to control index.
pub type Strategy = HashMap<NodeId, usize>;

/// Every strategy defined on the nodes it reaches from the root.
pub fn all_strategies(tree: &ScenarioTree) -> Vec<Strategy> {
    fn below(tree: &ScenarioTree, node: NodeId) -> Vec<Strategy> {
        if tree.is_leaf(node) {
            return vec![Strategy::new()];
        }
        let mut out = Vec::new();
        for c in 0..tree.n_controls() {
            let mut partial = vec![Strategy::from([(node, c)])];
            for child in tree.children_under(node, c) {
                let subs = below(tree, child);
                partial = partial
                    .iter()
                    .flat_map(|p| {
                        subs.iter().map(move |s| {
                            let mut m = p.clone();
                            m.extend(s);
                            m
                        })
                    })
                    .collect();
            }
            out.extend(partial);
        }
        out
    }
    below(tree, tree.root())
}

/// One-step weight of the edge into `child`.
fn weight(tree: &ScenarioTree, child: NodeId) -> f64 {
    let b = tree.n_outcomes();
    let first = tree.first_child(tree.parent(child).unwrap());
    tree.weights()[(child - first) % b]
}

/// `sup_τ E[Y_τ]` under one strategy.
pub fn snell(tree: &ScenarioTree, y: &[f64], s: &Strategy, node: NodeId) -> f64 {
    if tree.is_leaf(node) {
        return y[node];
    }
    let cont: f64 = tree
        .children_under(node, s[&node])
        .map(|ch| weight(tree, ch) * snell(tree, y, s, ch))
        .sum();
    y[node].max(cont)
}

/// `E[Y_τ]` under one strategy, stopping at the first flagged node.
pub fn stopped(
    tree: &ScenarioTree,
    y: &[f64],
    s: &Strategy,
    stop: &dyn Fn(NodeId) -> bool,
    node: NodeId,
) -> f64 {
    if tree.is_leaf(node) || stop(node) {
        return y[node];
    }
    tree.children_under(node, s[&node])
        .map(|ch| weight(tree, ch) * stopped(tree, y, s, stop, ch))
        .sum()
}

pub fn rewards(tree: &ScenarioTree, reward: &RewardFunctional) -> Vec<f64> {
    (0..tree.n_nodes())
        .map(|n| reward_at(tree, reward, n))
        .collect()
}

/// `min_μ max_τ E_μ[Y_τ]` by enumerating every strategy.
pub fn upper_value(tree: &ScenarioTree, y: &[f64]) -> f64 {
    all_strategies(tree)
        .iter()
        .map(|s| snell(tree, y, s, tree.root()))
        .fold(f64::INFINITY, f64::min)
}

fn prefix_key(tree: &ScenarioTree, node: NodeId) -> Vec<u64> {
    tree.path_to(node)
        .iter()
        .map(|&n| (tree.state(n)[0] + 0.0).to_bits())
        .collect()
}

/// `max_τ min_μ E_μ[Y_τ]` over stopping rules that read only the state prefix.
///
/// Exponential in the number of distinct interior prefixes; returns `None`
/// above 12 of them.
pub fn lower_value(tree: &ScenarioTree, y: &[f64]) -> Option<f64> {
    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let interior: Vec<NodeId> = (0..tree.n_nodes()).filter(|&n| !tree.is_leaf(n)).collect();
    let node_id: HashMap<NodeId, usize> = interior
        .iter()
        .map(|&n| {
            let next = ids.len();
            (n, *ids.entry(prefix_key(tree, n)).or_insert(next))
        })
        .collect();
    if ids.len() > 12 {
        return None;
    }
    let strategies = all_strategies(tree);
    let best = (0..1u32 << ids.len())
        .map(|mask| {
            let stop = |n: NodeId| mask >> node_id[&n] & 1 == 1;
            strategies
                .iter()
                .map(|s| stopped(tree, y, s, &stop, tree.root()))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Some(best)
}

/// Recombining binomial lattice for the arithmetic American put
/// `S = spot + X`, `X ± σ√Δ` with probability 1/2 each.
pub fn lattice_put(spot: f64, strike: f64, sigma: f64, maturity: f64, n_steps: usize) -> f64 {
    let h = sigma * (maturity / n_steps as f64).sqrt();
    let payoff = |k: usize, j: usize| (strike - (spot + (2.0 * j as f64 - k as f64) * h)).max(0.0);
    let mut v: Vec<f64> = (0..=n_steps).map(|j| payoff(n_steps, j)).collect();
    for k in (0..n_steps).rev() {
        v = (0..=k)
            .map(|j| payoff(k, j).max(0.5 * v[j] + 0.5 * v[j + 1]))
            .collect();
    }
    v[0]
}
