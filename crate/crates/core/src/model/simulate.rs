use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pathspace::{Prefix, TimeGrid};

use super::{drift_eval, Control, DriftSpec};

/// Paths per RNG stream; fixed so results do not depend on the worker count.
const BLOCK: usize = 1024;

pub type FeedbackFn = dyn Fn(usize, Prefix<'_>) -> Control + Send + Sync;

/// Control policy for Monte Carlo paths.
#[derive(Clone)]
pub enum McControl {
    Constant(Control),
    /// Control as a function of the grid index and the state prefix.
    Feedback(Arc<FeedbackFn>),
}

impl std::fmt::Debug for McControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            McControl::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            McControl::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

/// Simulated state paths, row-major `(path, node, component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    dim: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.data.len() / (self.dim * self.n_nodes)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per path (the simulated segment including its start).
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn path(&self, i: usize) -> Prefix<'_> {
        let width = self.dim * self.n_nodes;
        Prefix::new(&self.data[i * width..(i + 1) * width], self.dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = Prefix<'_>> + '_ {
        (0..self.len()).map(move |i| self.path(i))
    }
}

/// Euler paths `X_{k+1} = X_k + b Δ + u √Δ Z_k` from `x0` over the whole grid.
pub fn simulate_paths(
    grid: TimeGrid,
    x0: &[f64],
    drift: &DriftSpec,
    control: &McControl,
    n_paths: usize,
    seed: u64,
) -> Result<PathSample> {
    simulate_paths_from(grid, x0, 0, drift, control, n_paths, seed)
}

/// Euler paths continuing a fixed history that ends at grid node `offset`.
///
/// The drift sees `history ⊗ X`; the returned sample holds the simulated
/// segment, nodes `offset..=n_steps`.
pub fn simulate_paths_from(
    grid: TimeGrid,
    history: &[f64],
    offset: usize,
    drift: &DriftSpec,
    control: &McControl,
    n_paths: usize,
    seed: u64,
) -> Result<PathSample> {
    grid.validate()?;
    drift.validate()?;
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    if offset >= grid.n_steps {
        return Err(Error::invalid("nothing to simulate past the grid end"));
    }
    let dim = history.len() / (offset + 1);
    if dim == 0 || history.len() != dim * (offset + 1) {
        return Err(Error::invalid("history length does not match offset"));
    }
    if let McControl::Constant(c) = control {
        if c.dim() != dim {
            return Err(Error::invalid("control and state dimensions differ"));
        }
    }
    let n_nodes = grid.n_steps - offset + 1;
    let n_blocks = n_paths.div_ceil(BLOCK);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let count = BLOCK.min(n_paths - block * BLOCK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            simulate_block(&grid, history, offset, dim, drift, control, count, &mut rng)
        })
        .collect();
    let mut data = Vec::with_capacity(n_paths * n_nodes * dim);
    for b in blocks {
        data.extend(b);
    }
    Ok(PathSample { dim, n_nodes, data })
}

#[allow(clippy::too_many_arguments)]
fn simulate_block(
    grid: &TimeGrid,
    history: &[f64],
    offset: usize,
    dim: usize,
    drift: &DriftSpec,
    control: &McControl,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut out = Vec::with_capacity(count * (n - offset + 1) * dim);
    let mut full = Vec::with_capacity((n + 1) * dim);
    let mut z = vec![0.0; dim];
    for _ in 0..count {
        full.clear();
        full.extend_from_slice(history);
        for k in offset..n {
            let view = Prefix::new(&full, dim);
            let u = match control {
                McControl::Constant(c) => c.clone(),
                McControl::Feedback(f) => f(k, view),
            };
            let b = drift_eval(drift, k, view, &u);
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            let base = k * dim;
            for i in 0..dim {
                let mut diffusion = 0.0;
                for (j, zj) in z.iter().enumerate() {
                    diffusion += u.entry(i, j) * zj;
                }
                let x = full[base + i] + b[i] * dt + diffusion * sqrt_dt;
                full.push(x);
            }
        }
        out.extend_from_slice(&full[offset * dim..]);
    }
    out
}
