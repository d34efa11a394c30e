use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Branching, Control, ControlSet, DriftSpec, ScenarioTree, TreeSpec, DEFAULT_NODE_CAP,
};
use crate::pathspace::TimeGrid;
use crate::reward::{ModulusSpec, RewardFunctional, RewardKind};
use crate::verify::{HittingTime, MomentConfig};

/// The whole configuration document. Unknown keys anywhere are errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: Option<TimeGrid>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    pub controls: Option<ControlsConfig>,
    pub reward: Option<RewardConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub demo: Option<DemoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "one")]
    pub dim: usize,
    /// Initial state; zero when omitted.
    pub x0: Option<Vec<f64>>,
    #[serde(default = "DriftSpec::zero")]
    pub drift: DriftSpec,
    #[serde(default)]
    pub branching: Branching,
    #[serde(default = "default_node_cap")]
    pub node_cap: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            x0: None,
            drift: DriftSpec::zero(),
            branching: Branching::default(),
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

fn one() -> usize {
    1
}

fn default_node_cap() -> usize {
    DEFAULT_NODE_CAP
}

/// Scalar volatilities (`values`) or row-major matrices (`matrices`), not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub values: Option<Vec<f64>>,
    pub matrices: Option<Vec<Vec<f64>>>,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub payoff: RewardKind,
    #[serde(default)]
    pub base: f64,
    /// Defaults to the modulus that holds for the payoff on the configured grid.
    pub modulus: Option<ModulusSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Check names to run; all of them when omitted.
    pub suite: Option<Vec<String>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_pairs")]
    pub y1_pairs: usize,
    #[serde(default = "default_drift_samples")]
    pub drift_samples: usize,
    /// Grid indices for the DPP check; every node time when omitted.
    pub dpp_times: Option<Vec<usize>>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<HittingTime>,
    #[serde(default = "default_pastings")]
    pub pasting_trials: usize,
    #[serde(default)]
    pub continuity: ContinuityParams,
    #[serde(default)]
    pub moments: MomentConfig,
    #[serde(default)]
    pub transfer: TransferParams,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suite: None,
            seed: default_seed(),
            y1_pairs: default_pairs(),
            drift_samples: default_drift_samples(),
            dpp_times: None,
            horizons: default_horizons(),
            pasting_trials: default_pastings(),
            continuity: ContinuityParams::default(),
            moments: MomentConfig::default(),
            transfer: TransferParams::default(),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_pairs() -> usize {
    10_000
}

fn default_drift_samples() -> usize {
    1_000
}

fn default_pastings() -> usize {
    20
}

fn default_horizons() -> Vec<HittingTime> {
    vec![
        HittingTime::Terminal,
        HittingTime::Barrier { level: 0.5 },
        HittingTime::TauDelta { delta: 0.0 },
    ]
}

/// Pre-history perturbations; the tree is re-rooted at `offset` on the configured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityParams {
    pub offset: Option<usize>,
    #[serde(default = "default_continuity_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

impl Default for ContinuityParams {
    fn default() -> Self {
        Self {
            offset: None,
            n_pairs: default_continuity_pairs(),
            perturbation: default_perturbation(),
        }
    }
}

fn default_continuity_pairs() -> usize {
    20
}

fn default_perturbation() -> f64 {
    0.1
}

/// Monte Carlo comparison of two histories under the configured drift and the first control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferParams {
    #[serde(default = "default_transfer_steps")]
    pub n_steps: usize,
    #[serde(default = "default_transfer_offset")]
    pub offset: usize,
    #[serde(default = "default_transfer_paths")]
    pub n_paths: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self {
            n_steps: default_transfer_steps(),
            offset: default_transfer_offset(),
            n_paths: default_transfer_paths(),
            perturbation: default_perturbation(),
            slack: default_slack(),
        }
    }
}

fn default_transfer_steps() -> usize {
    16
}

fn default_transfer_offset() -> usize {
    4
}

fn default_transfer_paths() -> usize {
    10_000
}

fn default_slack() -> f64 {
    0.2
}

/// American put on `spot + X` with zero rates and volatility in `[sigma_lo, sigma_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub spot: f64,
    pub strikes: Vec<f64>,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Candidate volatilities; those inside the interval join its endpoints.
    #[serde(default)]
    pub vol_grid: Vec<f64>,
    #[serde(default = "default_maturity")]
    pub maturity: f64,
    #[serde(default = "default_demo_steps")]
    pub n_steps: usize,
    /// Strike used for the exercise boundary; the first strike when omitted.
    pub boundary_strike: Option<f64>,
    /// Extra intervals for the value-vs-width table.
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    /// Pays zero instead of the put, for sanity runs.
    #[serde(default)]
    pub zero_payoff: bool,
}

fn default_maturity() -> f64 {
    1.0
}

fn default_demo_steps() -> usize {
    6
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let grid = self
            .grid
            .ok_or_else(|| Error::Config("missing section: grid".into()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn control_set(&self) -> Result<ControlSet> {
        let c = self
            .controls
            .as_ref()
            .ok_or_else(|| Error::Config("missing section: controls".into()))?;
        let set = match (&c.values, &c.matrices) {
            (Some(values), None) => ControlSet::scalar(values, c.cap)?,
            (None, Some(matrices)) => {
                let dim = self.dynamics.dim;
                let controls = matrices
                    .iter()
                    .map(|m| Control::new(dim, m.clone()))
                    .collect::<Result<Vec<_>>>()?;
                ControlSet::new(controls, c.cap)?
            }
            _ => {
                return Err(Error::Config(
                    "controls need exactly one of `values` or `matrices`".into(),
                ))
            }
        };
        if set.dim() != self.dynamics.dim {
            return Err(Error::Config(format!(
                "controls have dimension {} but dynamics.dim is {}",
                set.dim(),
                self.dynamics.dim
            )));
        }
        Ok(set)
    }

    pub fn reward(&self) -> Result<RewardFunctional> {
        let r = self
            .reward
            .as_ref()
            .ok_or_else(|| Error::Config("missing section: reward".into()))?;
        match &r.modulus {
            Some(m) => RewardFunctional::new(r.payoff.clone(), r.base, *m),
            None => RewardFunctional::with_default_modulus(
                r.payoff.clone(),
                r.base,
                self.grid()?.horizon(),
            ),
        }
    }

    pub fn x0(&self) -> Result<Vec<f64>> {
        let dim = self.dynamics.dim;
        let x0 = self.dynamics.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
        if x0.len() != dim {
            return Err(Error::Config(format!(
                "dynamics.x0 has {} entries, expected {dim}",
                x0.len()
            )));
        }
        Ok(x0)
    }

    pub fn tree_spec(&self) -> Result<TreeSpec> {
        Ok(TreeSpec {
            grid: self.grid()?,
            drift: self.dynamics.drift.clone(),
            controls: self.control_set()?,
            branching: self.dynamics.branching,
            node_cap: self.dynamics.node_cap,
        })
    }

    pub fn tree(&self) -> Result<ScenarioTree> {
        ScenarioTree::expand(self.tree_spec()?, &self.x0()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_STEP: &str = r#"{
        "grid": {"t_start": 0, "t_end": 1, "n_steps": 1},
        "controls": {"values": [1.0, 0.5], "cap": 1.0},
        "reward": {"payoff": {"kind": "terminal-abs"}}
    }"#;

    #[test]
    fn minimal_config() {
        let c = Config::from_json(ONE_STEP).unwrap();
        let tree = c.tree().unwrap();
        assert_eq!(tree.n_nodes(), 5);
        assert_eq!(c.reward().unwrap().modulus, ModulusSpec::Linear { k: 1.0 });
        assert_eq!(c.solver.delta, 0.0);
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let bad = ONE_STEP.replace("\"cap\"", "\"caps\"");
        assert!(matches!(Config::from_json(&bad), Err(Error::Config(_))));
        let bad = ONE_STEP.replace("\"grid\"", "\"grids\"");
        assert!(Config::from_json(&bad).is_err());
        let bad = r#"{"solver": {"delta": 0, "tolerance": 1}}"#;
        assert!(Config::from_json(bad).is_err());
    }

    #[test]
    fn controls_need_one_form() {
        let c = Config::from_json(r#"{"controls": {"cap": 1.0}}"#).unwrap();
        assert!(c.control_set().is_err());
        let c = Config::from_json(
            r#"{"dynamics": {"dim": 2, "branching": 4},
                "controls": {"matrices": [[1, 0, 0, 1]], "cap": 2}}"#,
        )
        .unwrap();
        assert_eq!(c.control_set().unwrap().dim(), 2);
    }
}
