//! Path-dependent rewards `Y_t(ω)` with a declared one-sided modulus of continuity.
//!
//! Rewards are evaluated on `base + X`, where `X` is the state prefix (history
//! followed by the simulated branch). Scalar payoffs read the first state
//! component; `terminal-abs` uses the Euclidean norm of the whole state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScenarioTree;
use crate::numeric::norm;
use crate::pathspace::{concat, Path, Prefix, TimeGrid};

/// Modulus of continuity `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModulusSpec {
    /// `ρ(δ) = k δ`.
    Linear { k: f64 },
    /// `ρ(δ) = k δ^exponent`.
    Power { k: f64, exponent: f64 },
    /// `ρ(δ) = k max(δ, δ^exponent)`, which stays below `k (1 + δ^exponent)`.
    AffinePower { k: f64, exponent: f64 },
}

impl ModulusSpec {
    pub fn zero() -> Self {
        ModulusSpec::Linear { k: 0.0 }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        let delta = delta.max(0.0);
        match *self {
            ModulusSpec::Linear { k } => k * delta,
            ModulusSpec::Power { k, exponent } => k * delta.powf(exponent),
            ModulusSpec::AffinePower { k, exponent } => k * delta.max(delta.powf(exponent)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, exponent) = match *self {
            ModulusSpec::Linear { k } => (k, 1.0),
            ModulusSpec::Power { k, exponent } | ModulusSpec::AffinePower { k, exponent } => {
                (k, exponent)
            }
        };
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::invalid("modulus constant must be finite and >= 0"));
        }
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(Error::invalid("modulus exponent must be finite and >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardKind {
    /// `(K − (base + x_k))⁺`.
    AmericanPut {
        strike: f64,
    },
    /// `max_{i ≤ k} (base + x_i)`.
    LookbackMax,
    /// `|base + x_k|`.
    TerminalAbs,
    /// `scale · Σ_{i < k} (base + x_i)⁺ Δ`.
    RunningSum {
        scale: f64,
    },
    Constant {
        value: f64,
    },
    /// Piecewise-linear in `base + x_k` with flat extrapolation.
    CustomTable {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardFunctional {
    pub kind: RewardKind,
    #[serde(default)]
    pub base: f64,
    pub modulus: ModulusSpec,
}

impl RewardFunctional {
    pub fn new(kind: RewardKind, base: f64, modulus: ModulusSpec) -> Result<Self> {
        let y = Self {
            kind,
            base,
            modulus,
        };
        y.validate()?;
        Ok(y)
    }

    /// Reward with the modulus that holds for it on a grid of length `horizon`.
    pub fn with_default_modulus(kind: RewardKind, base: f64, horizon: f64) -> Result<Self> {
        let k = match &kind {
            RewardKind::AmericanPut { .. } | RewardKind::LookbackMax | RewardKind::TerminalAbs => {
                1.0
            }
            RewardKind::RunningSum { scale } => scale.abs() * horizon,
            RewardKind::Constant { .. } => 0.0,
            RewardKind::CustomTable { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max),
        };
        Self::new(kind, base, ModulusSpec::Linear { k })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: RewardKind::Constant { value },
            base: 0.0,
            modulus: ModulusSpec::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.modulus.validate()?;
        if !self.base.is_finite() {
            return Err(Error::invalid("reward base must be finite"));
        }
        match &self.kind {
            RewardKind::AmericanPut { strike } if !strike.is_finite() => {
                Err(Error::invalid("strike must be finite"))
            }
            RewardKind::RunningSum { scale } if !(scale.is_finite() && *scale >= 0.0) => {
                Err(Error::invalid("running-sum scale must be finite and >= 0"))
            }
            RewardKind::Constant { value } if !value.is_finite() => {
                Err(Error::invalid("constant reward must be finite"))
            }
            RewardKind::CustomTable { xs, ys } => {
                if xs.is_empty() || xs.len() != ys.len() {
                    return Err(Error::invalid(
                        "custom reward table needs equally many xs and ys",
                    ));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("custom reward xs must be increasing"));
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("custom reward table must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `inf Y` over paths anchored at zero.
    pub fn lower_bound(&self) -> f64 {
        match &self.kind {
            RewardKind::AmericanPut { .. }
            | RewardKind::TerminalAbs
            | RewardKind::RunningSum { .. } => 0.0,
            RewardKind::LookbackMax => self.base,
            RewardKind::Constant { value } => *value,
            RewardKind::CustomTable { ys, .. } => ys.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// `Y` at grid node `k` on the state prefix (at least `k + 1` nodes; later nodes are ignored).
    pub fn eval(&self, grid: &TimeGrid, k: usize, prefix: Prefix<'_>) -> f64 {
        let level = |i: usize| self.base + prefix.at(i)[0];
        match &self.kind {
            RewardKind::AmericanPut { strike } => (strike - level(k)).max(0.0),
            RewardKind::LookbackMax => (0..=k).map(level).fold(f64::NEG_INFINITY, f64::max),
            RewardKind::TerminalAbs => {
                let mut x = prefix.at(k).to_vec();
                x[0] += self.base;
                norm(&x)
            }
            RewardKind::RunningSum { scale } => {
                let dt = grid.dt();
                scale * (0..k).map(|i| level(i).max(0.0) * dt).sum::<f64>()
            }
            RewardKind::Constant { value } => *value,
            RewardKind::CustomTable { xs, ys } => crate::model::interpolate_table(xs, ys, level(k)),
        }
    }
}

/// `Y_k` on `pre_history ⊗ suffix` when a history is given, else on `prefix` itself.
///
/// With a history on `[0, t]`, `prefix` is the post-`t` canonical segment
/// (anchored at zero) and `k` is still the absolute grid index.
pub fn eval_reward(
    y: &RewardFunctional,
    grid: &TimeGrid,
    k: usize,
    prefix: Prefix<'_>,
    pre_history: Option<&Path>,
) -> Result<f64> {
    match pre_history {
        None => {
            if prefix.len() < k + 1 {
                return Err(Error::invalid(format!(
                    "prefix has {} nodes, node {k} needs {}",
                    prefix.len(),
                    k + 1
                )));
            }
            Ok(y.eval(grid, k, prefix))
        }
        Some(history) => {
            let t = history.grid().n_steps;
            if k < t || prefix.len() < k - t + 1 {
                return Err(Error::invalid(format!(
                    "node {k} is not covered by a history of {t} steps and a suffix of {} nodes",
                    prefix.len()
                )));
            }
            let n = prefix.len() - 1;
            let suffix_grid = TimeGrid::new(grid.time(t), grid.time(t + n), n)?;
            let suffix = Path::from_flat(suffix_grid, prefix.dim(), prefix.raw().to_vec())?;
            let joined = concat(history, &suffix)?;
            Ok(y.eval(grid, k, joined.as_prefix()))
        }
    }
}

/// Reward values at every node of a tree.
pub fn tree_rewards(tree: &ScenarioTree, y: &RewardFunctional) -> Vec<f64> {
    let mut prefix = Vec::new();
    let dim = tree.dim();
    (0..tree.n_nodes())
        .map(|node| {
            tree.prefix_into(node, &mut prefix);
            y.eval(
                tree.grid(),
                tree.time_index(node),
                Prefix::new(&prefix, dim),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub template: RewardFunctional,
    /// Why the declared modulus holds.
    pub certificate: &'static str,
}

/// Built-in rewards with linear moduli valid on unit-horizon grids.
pub fn builtin_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "american-put",
            template: RewardFunctional {
                kind: RewardKind::AmericanPut { strike: 1.0 },
                base: 1.0,
                modulus: ModulusSpec::Linear { k: 1.0 },
            },
            certificate: "|(K-a)+ - (K-b)+| <= |a-b|; for t1 <= t2 the stopped paths differ by \
                          at least |x1(t1) - x2(t2)|, so the gap is at most d_inf",
        },
        CatalogEntry {
            name: "lookback-max",
            template: RewardFunctional {
                kind: RewardKind::LookbackMax,
                base: 0.0,
                modulus: ModulusSpec::Linear { k: 1.0 },
            },
            certificate: "the later maximum ranges over a superset of nodes, each within \
                          d_inf of the earlier ones",
        },
        CatalogEntry {
            name: "terminal-abs",
            template: RewardFunctional {
                kind: RewardKind::TerminalAbs,
                base: 0.0,
                modulus: ModulusSpec::Linear { k: 1.0 },
            },
            certificate: "reverse triangle inequality: ||a| - |b|| <= |a - b| <= d_inf",
        },
        CatalogEntry {
            name: "running-sum",
            template: RewardFunctional {
                kind: RewardKind::RunningSum { scale: 1.0 },
                base: 0.0,
                modulus: ModulusSpec::Linear { k: 1.0 },
            },
            certificate: "extra terms of the later sum are nonnegative; shared terms differ \
                          by at most scale * horizon * d_inf (unit horizon)",
        },
        CatalogEntry {
            name: "constant",
            template: RewardFunctional::constant(1.0),
            certificate: "constant rewards have modulus zero",
        },
    ]
}
