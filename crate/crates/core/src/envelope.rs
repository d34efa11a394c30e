//! Robust (upper) Snell envelope, classic Snell envelope, nonlinear expectation
//! and the hitting times `τ_δ`, `τ*`.
//!
//! On a scenario tree the upper envelope satisfies the one-step recursion
//!
//! ```text
//! Z̄(node) = max( Y(node), min_u Σ_j w_j Z̄(child_{u,j}) ),   Z̄(leaf) = Y(leaf).
//! ```
//!
//! The minimum over controls can be pulled inside the maximum because `Y` does
//! not depend on the control chosen at the node.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::ControlStrategy;
use crate::model::{NodeId, ScenarioTree};
use crate::numeric::pairwise_dot;
use crate::reward::{tree_rewards, RewardFunctional};

/// Relative guard for the floating-point test `Z̄ = Y`.
pub const STOP_GUARD: f64 = 1e-12;

/// Levels smaller than this are swept on the calling thread.
const PAR_MIN_LEN: usize = 4096;

/// `Z̄ − Y ≤ δ`, up to the relative guard.
pub fn within_stop_band(z: f64, y: f64, delta: f64) -> bool {
    z - y <= delta + STOP_GUARD * (1.0 + y.abs())
}

/// Per-node solution of the robust stopping problem on one tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSolution {
    /// `Z̄` per node.
    pub z: Vec<f64>,
    /// `Y` per node.
    pub y: Vec<f64>,
    /// Minimizing control index per interior node (`None` at leaves).
    pub argmin: Vec<Option<usize>>,
    /// `min_u E_u[Z̄_next]` per interior node (`None` at leaves).
    pub continuation: Vec<Option<f64>>,
    /// `Z̄ ≤ Y + δ` (always true at leaves).
    pub stop: Vec<bool>,
    pub delta: f64,
    /// `τ_δ` grid index along each leaf's branch, in leaf order.
    pub tau: Vec<usize>,
}

impl EnvelopeSolution {
    pub fn root_value(&self) -> f64 {
        self.z[0]
    }

    /// Strategy that plays the minimizing control at every interior node.
    pub fn argmin_strategy(&self) -> ControlStrategy {
        ControlStrategy::from_choices(self.argmin.clone())
    }
}

/// Solves for `Z̄` by backward induction over the whole tree.
pub fn robust_envelope(
    tree: &ScenarioTree,
    y: &RewardFunctional,
    delta: f64,
) -> Result<EnvelopeSolution> {
    robust_envelope_with_rewards(tree, tree_rewards(tree, y), delta)
}

/// [`robust_envelope`] with precomputed per-node rewards.
pub fn robust_envelope_with_rewards(
    tree: &ScenarioTree,
    rewards: Vec<f64>,
    delta: f64,
) -> Result<EnvelopeSolution> {
    check_delta(delta)?;
    if rewards.len() != tree.n_nodes() {
        return Err(Error::invalid("one reward per node is required"));
    }
    let n = tree.n_nodes();
    let mut z = vec![0.0; n];
    let mut argmin = vec![None; n];
    let mut continuation = vec![None; n];
    let leaves = tree.leaves();
    z[leaves.clone()].copy_from_slice(&rewards[leaves.clone()]);

    let weights = tree.weights();
    let b = tree.n_outcomes();
    let m = tree.n_controls();
    for depth in (0..tree.depth()).rev() {
        let level = tree.level(depth);
        let (upper, lower) = z.split_at_mut(level.end);
        let next = &*lower;
        let next_start = level.end;
        let rewards = &rewards;
        let results: Vec<(f64, f64, usize)> = level
            .clone()
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|node| {
                let first = tree.first_child(node) - next_start;
                let mut best = f64::INFINITY;
                let mut best_c = 0;
                for c in 0..m {
                    let start = first + c * b;
                    let e = pairwise_dot(weights, &next[start..start + b]);
                    if e < best {
                        best = e;
                        best_c = c;
                    }
                }
                (rewards[node].max(best), best, best_c)
            })
            .collect();
        for (node, (zv, cont, c)) in level.zip(results) {
            upper[node] = zv;
            continuation[node] = Some(cont);
            argmin[node] = Some(c);
        }
    }

    let stop: Vec<bool> = (0..n)
        .map(|node| tree.is_leaf(node) || within_stop_band(z[node], rewards[node], delta))
        .collect();
    let mut sol = EnvelopeSolution {
        z,
        y: rewards,
        argmin,
        continuation,
        stop,
        delta,
        tau: Vec::new(),
    };
    sol.tau = tau_delta(tree, &sol, delta)?;
    Ok(sol)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "delta must be finite and >= 0, got {delta}"
        )))
    }
}

/// `τ_δ = first grid index with Z̄ ≤ Y + δ` along every root-to-leaf branch.
pub fn tau_delta(tree: &ScenarioTree, sol: &EnvelopeSolution, delta: f64) -> Result<Vec<usize>> {
    check_delta(delta)?;
    // first hitting depth at each node given that no ancestor hit; usize::MAX = not yet
    let n = tree.n_nodes();
    let mut hit = vec![usize::MAX; n];
    for node in 0..n {
        let inherited = tree.parent(node).map_or(usize::MAX, |p| hit[p]);
        hit[node] = if inherited != usize::MAX {
            inherited
        } else if tree.is_leaf(node) || within_stop_band(sol.z[node], sol.y[node], delta) {
            tree.time_index(node)
        } else {
            usize::MAX
        };
    }
    Ok(tree.leaves().map(|leaf| hit[leaf]).collect())
}

/// Classic Snell envelope under one fixed strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnellValues {
    /// `V` on nodes reached under the strategy, `NaN` elsewhere.
    pub values: Vec<f64>,
    /// First-contact rule `V ≤ Y + δ` on reached nodes.
    pub stop: Vec<bool>,
    pub reachable: Vec<bool>,
}

impl SnellValues {
    pub fn root_value(&self) -> f64 {
        self.values[0]
    }
}

/// `V = max(Y, E_μ[V_next])` under `strategy`, starting from the root.
pub fn classic_snell(
    tree: &ScenarioTree,
    strategy: &ControlStrategy,
    y: &RewardFunctional,
    delta: f64,
) -> Result<SnellValues> {
    classic_snell_with_rewards(tree, strategy, &tree_rewards(tree, y), tree.root(), delta)
}

/// [`classic_snell`] from any node, with precomputed rewards.
pub fn classic_snell_with_rewards(
    tree: &ScenarioTree,
    strategy: &ControlStrategy,
    rewards: &[f64],
    from: NodeId,
    delta: f64,
) -> Result<SnellValues> {
    check_delta(delta)?;
    let order = strategy.reachable_from(tree, from)?;
    let n = tree.n_nodes();
    let mut values = vec![f64::NAN; n];
    let mut reachable = vec![false; n];
    let weights = tree.weights();
    let mut buf = Vec::with_capacity(tree.n_outcomes());
    for &node in order.iter().rev() {
        reachable[node] = true;
        values[node] = if tree.is_leaf(node) {
            rewards[node]
        } else {
            let c = strategy.get(node).expect("reachable nodes carry a control");
            buf.clear();
            buf.extend(tree.children_under(node, c).map(|ch| values[ch]));
            rewards[node].max(pairwise_dot(weights, &buf))
        };
    }
    let stop = (0..n)
        .map(|node| {
            reachable[node]
                && (tree.is_leaf(node) || within_stop_band(values[node], rewards[node], delta))
        })
        .collect();
    Ok(SnellValues {
        values,
        stop,
        reachable,
    })
}

/// `E̲_from[ξ]`: backward minimum over controls of expectations of a leaf functional.
pub fn nonlinear_expectation(tree: &ScenarioTree, from: NodeId, xi: impl Fn(NodeId) -> f64) -> f64 {
    let steps = tree.depth() - tree.depth_of(from);
    let leaves = tree.descendants(from, steps);
    let mut values: Vec<f64> = leaves.map(&xi).collect();
    let weights = tree.weights();
    let b = tree.n_outcomes();
    let fan = tree.fan();
    for _ in 0..steps {
        values = values
            .chunks_exact(fan)
            .map(|children| {
                children
                    .chunks_exact(b)
                    .map(|group| pairwise_dot(weights, group))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    values[0]
}

/// When to stop, for [`stopped_value`].
#[derive(Debug, Clone, Copy)]
pub enum StopAt<'a> {
    /// At the starting node.
    Immediately,
    /// At the first node whose grid index is at least `k` (the terminal node at the latest).
    Index(usize),
    /// `τ_δ` for the given `δ`.
    TauDelta(f64),
    /// At the first node flagged in a per-node stop mask.
    Mask(&'a [bool]),
}

/// `Z̄_τ` along every branch below `from`, indexed like [`ScenarioTree::descendants`] at the leaves.
///
/// The returned closure feeds [`nonlinear_expectation`].
pub fn stopped_value<'s>(
    tree: &'s ScenarioTree,
    sol: &'s EnvelopeSolution,
    from: NodeId,
    rule: StopAt<'s>,
) -> impl Fn(NodeId) -> f64 + 's {
    let from_depth = tree.depth_of(from);
    move |leaf: NodeId| {
        let path = tree.path_to(leaf);
        for &node in &path[from_depth..] {
            let stops = tree.is_leaf(node)
                || match rule {
                    StopAt::Immediately => true,
                    StopAt::Index(k) => tree.time_index(node) >= k,
                    StopAt::TauDelta(delta) => within_stop_band(sol.z[node], sol.y[node], delta),
                    StopAt::Mask(mask) => mask[node],
                };
            if stops {
                return sol.z[node];
            }
        }
        unreachable!("the leaf always stops")
    }
}
