use std::sync::Arc;

use serde::Serialize;

use crate::envelope::classic_snell_with_rewards;
use crate::error::{Error, Result};
use crate::model::{NodeId, ScenarioTree};

use super::{ControlStrategy, PrefixTable};

/// Tolerance for the pasting identities.
pub const PASTING_TOLERANCE: f64 = 1e-12;

/// Event measurable with respect to the state prefix: receives the full flat
/// state path (history included) up to the node it is asked about.
pub type PrefixEvent = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Probability of reaching each node from `from` under `strategy` (zero off its support).
pub fn node_law(tree: &ScenarioTree, strategy: &ControlStrategy, from: NodeId) -> Result<Vec<f64>> {
    let mut law = vec![0.0; tree.n_nodes()];
    law[from] = 1.0;
    for node in strategy.reachable_from(tree, from)? {
        if node != from {
            let parent = tree
                .parent(node)
                .expect("non-root reached node has a parent");
            let (_, outcome) = tree.edge_of(node).expect("non-root node has an edge");
            law[node] = law[parent] * tree.weights()[outcome];
        }
    }
    Ok(law)
}

/// Aggregates a node law onto state prefixes.
pub fn prefix_law(table: &PrefixTable, node_law: &[f64]) -> Vec<f64> {
    (0..table.len())
        .map(|id| table.nodes(id).iter().map(|&n| node_law[n]).sum())
        .collect()
}

/// Partition class of each node at depth `depth`, indexed from the level start.
fn classify(tree: &ScenarioTree, depth: usize, partition: &[PrefixEvent]) -> Result<Vec<usize>> {
    let mut buf = Vec::new();
    tree.level(depth)
        .map(|node| {
            tree.prefix_into(node, &mut buf);
            let hits: Vec<usize> = (0..partition.len())
                .filter(|&j| partition[j](&buf))
                .collect();
            match hits.as_slice() {
                [j] => Ok(*j),
                [] => Err(Error::invalid(format!(
                    "partition has a gap at prefix {buf:?}"
                ))),
                _ => Err(Error::invalid(format!(
                    "partition sets {hits:?} overlap at prefix {buf:?}"
                ))),
            }
        })
        .collect()
}

fn pasting_depth(
    tree: &ScenarioTree,
    s: usize,
    partition: &[PrefixEvent],
    pieces: &[ControlStrategy],
) -> Result<usize> {
    if s < tree.offset() || s > tree.offset() + tree.depth() {
        return Err(Error::invalid(format!(
            "pasting time index {s} is outside the tree"
        )));
    }
    if partition.len() != pieces.len() + 1 {
        return Err(Error::invalid("partition needs A_0 plus one set per piece"));
    }
    Ok(s - tree.offset())
}

/// Follows `base` before grid index `s`; from `s` on, follows `pieces[j-1]` on
/// `partition[j]` and keeps `base` on `partition[0]`.
pub fn paste_strategies(
    tree: &ScenarioTree,
    base: &ControlStrategy,
    s: usize,
    partition: &[PrefixEvent],
    pieces: &[ControlStrategy],
) -> Result<ControlStrategy> {
    let depth = pasting_depth(tree, s, partition, pieces)?;
    let class = classify(tree, depth, partition)?;
    let start = tree.level(depth).start;
    let mut pasted = ControlStrategy::empty(tree);
    for node in 0..tree.leaves().start {
        let source = if tree.depth_of(node) < depth {
            base
        } else {
            match class[tree.ancestor_at_depth(node, depth) - start] {
                0 => base,
                j => &pieces[j - 1],
            }
        };
        if let Some(c) = source.get(node) {
            pasted.set(node, c);
        }
    }
    Ok(pasted)
}

/// `sup_τ E_P̂[1_{A∩A_j} Y_τ]` against `E_P[1_{A∩A_j} sup_ζ E_{P_j}[Y_ζ]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PastingBound {
    pub piece: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PastingReport {
    pub passed: bool,
    pub identities_checked: usize,
    pub max_identity_error: f64,
    pub bounds: Vec<PastingBound>,
    pub failure: Option<String>,
}

/// Checks the law of the pasted strategy against the pasting formula, the
/// preservation identities on `A_0` and on `F_s` atoms, and the supremum
/// inequality on `event ∩ A_j` with zero slack.
pub fn pasting_check(
    tree: &ScenarioTree,
    base: &ControlStrategy,
    s: usize,
    partition: &[PrefixEvent],
    pieces: &[ControlStrategy],
    rewards: &[f64],
    event: &PrefixEvent,
) -> Result<PastingReport> {
    let depth = pasting_depth(tree, s, partition, pieces)?;
    let class = classify(tree, depth, partition)?;
    let level = tree.level(depth);
    let pasted = paste_strategies(tree, base, s, partition, pieces)?;
    let table = PrefixTable::new(tree);

    let p = node_law(tree, base, tree.root())?;
    let p_hat = node_law(tree, &pasted, tree.root())?;

    // P(A ∩ A_0) + Σ_j E_P[1_{A_j} P_j(A^{s,·})] on every node, then on prefixes
    let mut formula = vec![0.0; tree.n_nodes()];
    let mut piece_laws: Vec<(NodeId, usize, Vec<f64>)> = Vec::new();
    for node in level.clone() {
        if p[node] == 0.0 {
            continue;
        }
        let j = class[node - level.start];
        let steps = tree.depth() - depth;
        if j == 0 {
            for d in 0..=steps {
                for n in tree.descendants(node, d) {
                    formula[n] = p[n];
                }
            }
        } else {
            let q = node_law(tree, &pieces[j - 1], node)?;
            for d in 0..=steps {
                for n in tree.descendants(node, d) {
                    formula[n] = p[node] * q[n];
                }
            }
            piece_laws.push((node, j, q));
        }
    }
    for d in 0..depth {
        for n in tree.level(d) {
            formula[n] = p[n];
        }
    }
    let formula = prefix_law(&table, &formula);
    let p_pref = prefix_law(&table, &p);
    let p_hat_pref = prefix_law(&table, &p_hat);

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut failure = None;
    let mut record = |err: f64, what: String, failure: &mut Option<String>| {
        checked += 1;
        worst = worst.max(err);
        if err > PASTING_TOLERANCE && failure.is_none() {
            *failure = Some(format!("{what}: error {err:e}"));
        }
    };
    let class_of_prefix = |id: usize| {
        let node = table.node(id);
        class[tree.ancestor_at_depth(node, depth) - level.start]
    };
    for id in 0..table.len() {
        let node = table.node(id);
        let d = tree.depth_of(node);
        if tree.is_leaf(node) {
            record(
                (p_hat_pref[id] - formula[id]).abs(),
                format!("pasting formula on leaf cylinder {:?}", tree.prefix(node)),
                &mut failure,
            );
            if class_of_prefix(id) == 0 {
                record(
                    (p_hat_pref[id] - p_pref[id]).abs(),
                    format!("P̂ = P on A_0 cylinder {:?}", tree.prefix(node)),
                    &mut failure,
                );
            }
        }
        if d == depth && class_of_prefix(id) != 0 {
            record(
                (p_hat_pref[id] - p_pref[id]).abs(),
                format!("P̂ = P on F_s atom {:?}", tree.prefix(node)),
                &mut failure,
            );
        }
    }

    let snell_hat = classic_snell_with_rewards(tree, &pasted, rewards, tree.root(), 0.0)?;
    let mut bounds = Vec::with_capacity(pieces.len());
    let mut buf = Vec::new();
    for j in 1..=pieces.len() {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (node, _, _) in piece_laws.iter().filter(|(_, k, _)| *k == j) {
            tree.prefix_into(*node, &mut buf);
            if !event(&buf) {
                continue;
            }
            lhs += p_hat[*node] * snell_hat.values[*node];
            let piece = classic_snell_with_rewards(tree, &pieces[j - 1], rewards, *node, 0.0)?;
            rhs += p[*node] * piece.values[*node];
        }
        if lhs > rhs + PASTING_TOLERANCE * (1.0 + rhs.abs()) && failure.is_none() {
            failure = Some(format!("supremum bound on piece {j}: {lhs} > {rhs}"));
        }
        bounds.push(PastingBound { piece: j, lhs, rhs });
    }

    Ok(PastingReport {
        passed: failure.is_none(),
        identities_checked: checked,
        max_identity_error: worst,
        bounds,
        failure,
    })
}
