//! Discrete canonical path space.
//!
//! A [`Path`] is a `d`-dimensional trajectory sampled on a uniform [`TimeGrid`]
//! and anchored at zero. Concatenation `ω ⊗_s ω̃` glues a suffix (itself
//! anchored at zero) onto the end value of a prefix; truncation is the inverse
//! re-anchoring. Stopping a path at `t` (`ω(· ∧ t)`) clamps to the last grid
//! node at or below `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;

/// Relative tolerance used to decide whether two grid spacings or two times
/// refer to the same grid node.
const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        let grid = Self {
            t_start,
            t_end,
            n_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) {
            return Err(Error::invalid("grid times must be finite"));
        }
        if self.t_start < 0.0 {
            return Err(Error::invalid("grid t_start must be >= 0"));
        }
        if self.t_end <= self.t_start {
            return Err(Error::invalid("grid t_end must exceed t_start"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("grid n_steps must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Time of node `i`, computed from `i` directly so `time(n_steps) == t_end`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            return self.t_end;
        }
        self.t_start + (i as f64 / self.n_steps as f64) * (self.t_end - self.t_start)
    }

    /// Index of the grid node at time `t`, if `t` is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let raw = (t - self.t_start) / self.dt();
        let i = raw.round();
        if i < 0.0 || i > self.n_steps as f64 {
            return None;
        }
        let i = i as usize;
        let scale = 1.0 + self.t_end.abs();
        ((self.time(i) - t).abs() <= GRID_TOL * scale).then_some(i)
    }

    /// Index of the last grid node at or below `t` (clamped to the grid).
    pub fn floor_index(&self, t: f64) -> usize {
        if let Some(i) = self.index_of(t) {
            return i;
        }
        let raw = ((t - self.t_start) / self.dt()).floor();
        raw.clamp(0.0, self.n_steps as f64) as usize
    }

    /// The sub-grid spanning nodes `from..=to`.
    pub fn subgrid(&self, from: usize, to: usize) -> Result<TimeGrid> {
        if from >= to || to > self.n_steps {
            return Err(Error::invalid(format!(
                "sub-grid {from}..={to} is not inside 0..={}",
                self.n_steps
            )));
        }
        TimeGrid::new(self.time(from), self.time(to), to - from)
    }

    fn same_spacing(&self, other: &TimeGrid) -> bool {
        let (a, b) = (self.dt(), other.dt());
        (a - b).abs() <= GRID_TOL * a.abs().max(b.abs())
    }

    fn same_time(a: f64, b: f64) -> bool {
        (a - b).abs() <= GRID_TOL * (1.0 + a.abs().max(b.abs()))
    }
}

/// A borrowed view of a sequence of `d`-dimensional states.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    values: &'a [f64],
    dim: usize,
}

impl<'a> Prefix<'a> {
    pub fn new(values: &'a [f64], dim: usize) -> Self {
        debug_assert!(dim > 0 && values.len().is_multiple_of(dim));
        Self { values, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &'a [f64] {
        self.at(self.len() - 1)
    }

    /// Values through node `k` inclusive.
    pub fn through(&self, k: usize) -> Prefix<'a> {
        Prefix::new(&self.values[..(k + 1) * self.dim], self.dim)
    }

    pub fn raw(&self) -> &'a [f64] {
        self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }
}

/// A grid path anchored at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    /// Builds a path from flat row-major node values (`(n_steps + 1) * dim` entries).
    pub fn from_flat(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if dim == 0 {
            return Err(Error::invalid("path dimension must be positive"));
        }
        if values.len() != (grid.n_steps + 1) * dim {
            return Err(Error::invalid(format!(
                "path needs {} values, got {}",
                (grid.n_steps + 1) * dim,
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("path must start at zero"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(Self { grid, dim, values })
    }

    /// One-dimensional path from scalar node values.
    pub fn from_scalars(grid: TimeGrid, values: &[f64]) -> Result<Self> {
        Self::from_flat(grid, 1, values.to_vec())
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; (grid.n_steps + 1) * dim],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps + 1
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn as_prefix(&self) -> Prefix<'_> {
        Prefix::new(&self.values, self.dim)
    }

    /// Value of the path stopped at node `k`, read at node `i`: `ω(t_i ∧ t_k)`.
    pub fn stopped_value(&self, k: usize, i: usize) -> &[f64] {
        self.value(i.min(k))
    }

    /// Restriction to nodes `0..=k`, as a path on the sub-grid `[t_start, t_k]`.
    pub fn restrict(&self, k: usize) -> Result<Path> {
        let grid = self.grid.subgrid(0, k)?;
        Path::from_flat(grid, self.dim, self.values[..(k + 1) * self.dim].to_vec())
    }
}

/// `ω ⊗_s ω̃`: the prefix up to its end time `s`, then `ω(s) + ω̃` afterwards.
pub fn concat(prefix: &Path, suffix: &Path) -> Result<Path> {
    if prefix.dim != suffix.dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: prefix {} vs suffix {}",
            prefix.dim, suffix.dim
        )));
    }
    if !TimeGrid::same_time(prefix.grid.t_end, suffix.grid.t_start) {
        return Err(Error::invalid(format!(
            "junction mismatch: prefix ends at {}, suffix starts at {}",
            prefix.grid.t_end, suffix.grid.t_start
        )));
    }
    if !prefix.grid.same_spacing(&suffix.grid) {
        return Err(Error::invalid(format!(
            "grid spacing mismatch: {} vs {}",
            prefix.grid.dt(),
            suffix.grid.dt()
        )));
    }
    let dim = prefix.dim;
    let n1 = prefix.grid.n_steps;
    let n2 = suffix.grid.n_steps;
    let grid = TimeGrid::new(prefix.grid.t_start, suffix.grid.t_end, n1 + n2)?;
    let mut values = Vec::with_capacity((n1 + n2 + 1) * dim);
    values.extend_from_slice(&prefix.values[..n1 * dim]);
    let anchor = prefix.value(n1);
    for r in 0..=n2 {
        values.extend(anchor.iter().zip(suffix.value(r)).map(|(a, b)| a + b));
    }
    Ok(Path { grid, dim, values })
}

/// `Π_s(ω)(r) = ω(r) − ω(s)` for nodes `r ≥ s`.
pub fn truncate(path: &Path, s: f64) -> Result<Path> {
    let k = path
        .grid
        .index_of(s)
        .ok_or_else(|| Error::invalid(format!("time {s} is not a grid node")))?;
    truncate_at(path, k)
}

/// Index form of [`truncate`].
pub fn truncate_at(path: &Path, k: usize) -> Result<Path> {
    let n = path.grid.n_steps;
    if k > n {
        return Err(Error::invalid(format!("node {k} outside 0..={n}")));
    }
    if k == 0 {
        return Ok(path.clone());
    }
    if k == n {
        return Err(Error::invalid(
            "truncation at the terminal node leaves an empty grid",
        ));
    }
    let grid = path.grid.subgrid(k, n)?;
    let anchor = path.value(k);
    let mut values = Vec::with_capacity((n - k + 1) * path.dim);
    for r in k..=n {
        values.extend(path.value(r).iter().zip(anchor).map(|(a, b)| a - b));
    }
    Ok(Path {
        grid,
        dim: path.dim,
        values,
    })
}

/// A real-valued functional of a whole path.
pub trait PathFunctional {
    fn eval(&self, path: &Path) -> f64;
}

impl<F: Fn(&Path) -> f64> PathFunctional for F {
    fn eval(&self, path: &Path) -> f64 {
        self(path)
    }
}

/// `ω(T)`, first component.
#[derive(Debug, Clone, Copy)]
pub struct TerminalValue;

impl PathFunctional for TerminalValue {
    fn eval(&self, path: &Path) -> f64 {
        path.value(path.grid.n_steps)[0]
    }
}

/// `max_r ω(r)`, first component.
#[derive(Debug, Clone, Copy)]
pub struct RunningMax;

impl PathFunctional for RunningMax {
    fn eval(&self, path: &Path) -> f64 {
        path.values
            .chunks_exact(path.dim)
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `ξ^{s,ω}(ω̃) = ξ(ω ⊗_s ω̃)`.
#[derive(Debug, Clone)]
pub struct Shifted<F> {
    inner: F,
    prefix: Path,
}

impl<F: PathFunctional> Shifted<F> {
    pub fn prefix(&self) -> &Path {
        &self.prefix
    }

    /// Evaluates on a suffix, reporting grid mismatches instead of panicking.
    pub fn try_eval(&self, suffix: &Path) -> Result<f64> {
        Ok(self.inner.eval(&concat(&self.prefix, suffix)?))
    }
}

impl<F: PathFunctional> PathFunctional for Shifted<F> {
    /// Panics if `suffix` does not start where the stored prefix ends.
    fn eval(&self, suffix: &Path) -> f64 {
        self.try_eval(suffix)
            .expect("suffix grid must continue the stored prefix")
    }
}

/// Shifts `functional` by the history `prefix`, which must end at the shift time.
pub fn shift_functional<F: PathFunctional>(functional: F, prefix: Path) -> Shifted<F> {
    Shifted {
        inner: functional,
        prefix,
    }
}

/// `d_∞((t1,ω1),(t2,ω2)) = (t2 − t1) + sup_r |ω1(r ∧ t1) − ω2(r ∧ t2)|`.
pub fn dist_dinfty(t1: f64, w1: &Path, t2: f64, w2: &Path) -> Result<f64> {
    if t1 > t2 {
        return Err(Error::invalid(format!(
            "d_inf needs t1 <= t2, got {t1} > {t2}"
        )));
    }
    if w1.grid != w2.grid || w1.dim != w2.dim {
        return Err(Error::invalid("d_inf needs paths on the same grid"));
    }
    let k1 = w1.grid.floor_index(t1);
    let k2 = w2.grid.floor_index(t2);
    Ok((t2 - t1) + stopped_distance(w1, k1, w2, k2))
}

/// `sup_r |ω1(r ∧ t_k1) − ω2(r ∧ t_k2)|` over the grid.
pub fn stopped_distance(w1: &Path, k1: usize, w2: &Path, k2: usize) -> f64 {
    let last = k1.max(k2);
    let mut diff = vec![0.0; w1.dim];
    (0..=last)
        .map(|r| {
            let a = w1.stopped_value(k1, r);
            let b = w2.stopped_value(k2, r);
            for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
                *d = x - y;
            }
            norm(&diff)
        })
        .fold(0.0, f64::max)
}

/// `‖ω‖_{s,r} = max` of the Euclidean node norm over `[s, r]`.
pub fn sup_norm_segment(path: &Path, s: f64, r: f64) -> Result<f64> {
    if s > r {
        return Err(Error::invalid(format!(
            "segment needs s <= r, got {s} > {r}"
        )));
    }
    let ks = path
        .grid
        .index_of(s)
        .ok_or_else(|| Error::invalid(format!("time {s} is not a grid node")))?;
    let kr = path
        .grid
        .index_of(r)
        .ok_or_else(|| Error::invalid(format!("time {r} is not a grid node")))?;
    Ok(sup_norm_nodes(path.as_prefix(), ks, kr))
}

/// Node-index form of [`sup_norm_segment`] on any prefix.
pub fn sup_norm_nodes(prefix: Prefix<'_>, from: usize, to: usize) -> f64 {
    (from..=to).map(|i| norm(prefix.at(i))).fold(0.0, f64::max)
}
