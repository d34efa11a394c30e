use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::game::{pasting_check, ControlStrategy, PrefixEvent, PASTING_TOLERANCE};
use crate::model::ScenarioTree;

use super::{CheckReport, Tally};

/// A randomly drawn pasting: base strategy, pasting index, partition of the
/// prefixes at that index, one piece per non-base set, and a test event.
pub struct RandomPasting {
    pub base: ControlStrategy,
    pub s: usize,
    pub partition: Vec<PrefixEvent>,
    pub pieces: Vec<ControlStrategy>,
    pub event: PrefixEvent,
}

fn key(prefix: &[f64]) -> Vec<u64> {
    prefix
        .iter()
        .map(|&v| if v == 0.0 { 0 } else { v.to_bits() })
        .collect()
}

fn random_strategy(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> ControlStrategy {
    let mut s = ControlStrategy::empty(tree);
    for node in 0..tree.leaves().start {
        s.set(node, rng.random_range(0..tree.n_controls()));
    }
    s
}

/// Labels each distinct prefix at `depth` with a class drawn from `0..classes`.
fn labelling(
    tree: &ScenarioTree,
    depth: usize,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Arc<HashMap<Vec<u64>, usize>> {
    let mut map = HashMap::new();
    for node in tree.level(depth) {
        let k = key(&tree.prefix(node));
        map.entry(k).or_insert_with(|| rng.random_range(0..classes));
    }
    Arc::new(map)
}

impl RandomPasting {
    pub fn draw(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> Self {
        let depth = rng.random_range(0..=tree.depth());
        let n_pieces = rng.random_range(1..=3usize);
        let labels = labelling(tree, depth, n_pieces + 1, rng);
        let partition = (0..=n_pieces)
            .map(|j| {
                let labels = Arc::clone(&labels);
                Arc::new(move |p: &[f64]| labels.get(&key(p)) == Some(&j)) as PrefixEvent
            })
            .collect();
        let inside = labelling(tree, depth, 2, rng);
        let event: PrefixEvent = Arc::new(move |p: &[f64]| inside.get(&key(p)) == Some(&1));
        Self {
            base: random_strategy(tree, rng),
            s: tree.offset() + depth,
            partition,
            pieces: (0..n_pieces).map(|_| random_strategy(tree, rng)).collect(),
            event,
        }
    }
}

/// Pasting identities and the supremum bound on `trials` random pastings.
pub fn check_pasting(
    tree: &ScenarioTree,
    rewards: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("pasting", PASTING_TOLERANCE);
    for trial in 0..trials {
        let p = RandomPasting::draw(tree, &mut rng);
        let r = pasting_check(
            tree,
            &p.base,
            p.s,
            &p.partition,
            &p.pieces,
            rewards,
            &p.event,
        )?;
        tally.observe(r.max_identity_error, || {
            format!("trial {trial}: {}", r.failure.clone().unwrap_or_default())
        });
        for b in &r.bounds {
            tally.observe(b.lhs - b.rhs, || {
                format!("trial {trial}, piece {}: {} > {}", b.piece, b.lhs, b.rhs)
            });
        }
    }
    Ok(tally.finish(format!("{trials} random pastings")))
}
