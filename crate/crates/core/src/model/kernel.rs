use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathspace::Prefix;

use super::{drift_eval, Control, DriftSpec};

/// Number of outcomes per Euler step.
///
/// One-dimensional models take 2 (two-point, `±u√Δ`) or 3 (`±u√(3Δ)`, 0);
/// `d`-dimensional models take `2d` (`±u e_j √(dΔ)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Branching(pub usize);

impl Default for Branching {
    fn default() -> Self {
        Self::TWO_POINT
    }
}

impl Branching {
    pub const TWO_POINT: Branching = Branching(2);

    pub fn outcomes(self) -> usize {
        self.0
    }

    pub fn validate(self, dim: usize) -> Result<()> {
        let ok = match dim {
            0 => false,
            1 => self.0 == 2 || self.0 == 3,
            d => self.0 == 2 * d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "branching {} is not supported in dimension {dim}",
                self.0
            )))
        }
    }

    /// Outcome weights; identical for every node of a tree.
    pub fn weights(self, dim: usize) -> Vec<f64> {
        if dim == 1 && self.0 == 3 {
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]
        } else {
            vec![1.0 / self.0 as f64; self.0]
        }
    }
}

/// One-step transition law: increments and their weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepKernel {
    dim: usize,
    increments: Vec<f64>,
    weights: Vec<f64>,
}

impl StepKernel {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.increments
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (inc, w) in self.support() {
            for (mi, x) in m.iter_mut().zip(inc) {
                *mi += w * x;
            }
        }
        m
    }

    /// Covariance of the increments (row-major `d × d`).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for (inc, w) in self.support() {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += w * (inc[i] - m[i]) * (inc[j] - m[j]);
                }
            }
        }
        c
    }
}

/// Euler step of the controlled dynamics at node `k`.
pub fn step_kernel(
    spec: &DriftSpec,
    k: usize,
    prefix: Prefix<'_>,
    u: &Control,
    dt: f64,
    branching: Branching,
) -> Result<StepKernel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let dim = prefix.dim();
    if u.dim() != dim {
        return Err(Error::invalid("control and state dimensions differ"));
    }
    branching.validate(dim)?;
    let b = drift_eval(spec, k, prefix, u);
    let drift_step: Vec<f64> = b.iter().map(|bi| bi * dt).collect();
    Ok(build_kernel(&drift_step, u, dt, branching))
}

pub(crate) fn build_kernel(
    drift_step: &[f64],
    u: &Control,
    dt: f64,
    branching: Branching,
) -> StepKernel {
    let dim = drift_step.len();
    let weights = branching.weights(dim);
    let mut increments = Vec::with_capacity(branching.outcomes() * dim);
    if dim == 1 {
        let sigma = u.entry(0, 0);
        let spread = if branching.outcomes() == 3 {
            sigma * (3.0 * dt).sqrt()
        } else {
            sigma * dt.sqrt()
        };
        increments.push(drift_step[0] + spread);
        if branching.outcomes() == 3 {
            increments.push(drift_step[0]);
        }
        increments.push(drift_step[0] - spread);
    } else {
        let scale = (dim as f64 * dt).sqrt();
        for j in 0..dim {
            for sign in [1.0, -1.0] {
                for (i, bi) in drift_step.iter().enumerate() {
                    increments.push(bi + sign * u.entry(i, j) * scale);
                }
            }
        }
    }
    StepKernel {
        dim,
        increments,
        weights,
    }
}
