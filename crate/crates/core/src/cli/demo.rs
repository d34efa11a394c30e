//! American put under volatility uncertainty.
//!
//! The state is arithmetic, `S = spot + X` with `dX = σ dW` and zero rates, so
//! the robust value is the subhedging price `inf_σ sup_τ E[(K − S_τ)⁺]`.

use serde::Serialize;

use crate::envelope::{classic_snell, robust_envelope, EnvelopeSolution};
use crate::error::{Error, Result};
use crate::game::ControlStrategy;
use crate::model::{expand_tree, Branching, ControlSet, DriftSpec, ScenarioTree};
use crate::pathspace::TimeGrid;
use crate::reward::{ModulusSpec, RewardFunctional, RewardKind};

use super::config::DemoConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrikeRow {
    pub strike: f64,
    pub robust_value: f64,
    pub value_at_sigma_lo: f64,
    pub value_at_sigma_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub time_index: usize,
    pub time: f64,
    /// Highest spot at which exercise is optimal.
    pub max_exercise_spot: Option<f64>,
    /// Lowest spot at which waiting is optimal.
    pub min_continuation_spot: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthRow {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub controls: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub spot: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub controls: Vec<f64>,
    pub maturity: f64,
    pub n_steps: usize,
    pub strikes: Vec<StrikeRow>,
    pub boundary_strike: f64,
    pub boundary: Vec<BoundaryRow>,
    pub widening: Vec<WidthRow>,
    /// Value never rises when one interval contains another.
    pub widening_nonincreasing: bool,
}

fn validate(cfg: &DemoConfig) -> Result<()> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !(positive(cfg.sigma_lo) && cfg.sigma_lo <= cfg.sigma_hi && cfg.sigma_hi.is_finite()) {
        return Err(Error::Config("demo needs 0 < sigma_lo <= sigma_hi".into()));
    }
    if cfg.strikes.is_empty() || !cfg.strikes.iter().all(|k| k.is_finite()) {
        return Err(Error::Config(
            "demo needs at least one finite strike".into(),
        ));
    }
    if !cfg.spot.is_finite() || !positive(cfg.maturity) || cfg.n_steps == 0 {
        return Err(Error::Config(
            "demo needs a finite spot, maturity > 0 and n_steps >= 1".into(),
        ));
    }
    for [lo, hi] in &cfg.intervals {
        if !(positive(*lo) && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "bad volatility interval [{lo}, {hi}]"
            )));
        }
    }
    if cfg.vol_grid.iter().any(|v| !positive(*v)) {
        return Err(Error::Config("vol_grid entries must be positive".into()));
    }
    Ok(())
}

/// Every volatility the demo may use: the grid plus all interval endpoints.
/// Intersecting this one set with each interval keeps the control sets nested
/// whenever the intervals are.
fn universe(cfg: &DemoConfig) -> Vec<f64> {
    let mut all = cfg.vol_grid.clone();
    all.extend([cfg.sigma_lo, cfg.sigma_hi]);
    for [lo, hi] in &cfg.intervals {
        all.extend([*lo, *hi]);
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

pub fn interval_controls(cfg: &DemoConfig, lo: f64, hi: f64) -> Vec<f64> {
    universe(cfg)
        .into_iter()
        .filter(|&v| lo <= v && v <= hi)
        .collect()
}

fn demo_reward(cfg: &DemoConfig, strike: f64) -> RewardFunctional {
    if cfg.zero_payoff {
        return RewardFunctional::constant(0.0);
    }
    RewardFunctional {
        kind: RewardKind::AmericanPut { strike },
        base: cfg.spot,
        modulus: ModulusSpec::Linear { k: 1.0 },
    }
}

fn demo_tree(cfg: &DemoConfig, controls: &[f64]) -> Result<ScenarioTree> {
    let cap = controls.iter().copied().fold(0.0, f64::max);
    expand_tree(
        TimeGrid::new(0.0, cfg.maturity, cfg.n_steps)?,
        &[0.0],
        DriftSpec::zero(),
        ControlSet::scalar(controls, cap)?,
        Branching::TWO_POINT,
    )
}

/// Robust value and solution for one strike and control set.
pub fn robust_put(
    cfg: &DemoConfig,
    strike: f64,
    controls: &[f64],
) -> Result<(ScenarioTree, EnvelopeSolution)> {
    let tree = demo_tree(cfg, controls)?;
    let sol = robust_envelope(&tree, &demo_reward(cfg, strike), 0.0)?;
    Ok((tree, sol))
}

/// Classic American put value at a single volatility.
pub fn classic_put(cfg: &DemoConfig, strike: f64, sigma: f64) -> Result<f64> {
    let tree = demo_tree(cfg, &[sigma])?;
    let strategy = ControlStrategy::constant(&tree, 0);
    Ok(classic_snell(&tree, &strategy, &demo_reward(cfg, strike), 0.0)?.root_value())
}

fn boundary(cfg: &DemoConfig, tree: &ScenarioTree, sol: &EnvelopeSolution) -> Vec<BoundaryRow> {
    (0..tree.depth())
        .map(|d| {
            let spot = |n: usize| cfg.spot + tree.state(n)[0];
            let level = tree.level(d);
            BoundaryRow {
                time_index: d,
                time: tree.grid().time(d),
                max_exercise_spot: level
                    .clone()
                    .filter(|&n| sol.stop[n])
                    .map(spot)
                    .reduce(f64::max),
                min_continuation_spot: level.filter(|&n| !sol.stop[n]).map(spot).reduce(f64::min),
            }
        })
        .collect()
}

pub fn cmd_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    validate(cfg)?;
    let controls = interval_controls(cfg, cfg.sigma_lo, cfg.sigma_hi);
    let strikes = cfg
        .strikes
        .iter()
        .map(|&strike| {
            Ok(StrikeRow {
                strike,
                robust_value: robust_put(cfg, strike, &controls)?.1.root_value(),
                value_at_sigma_lo: classic_put(cfg, strike, cfg.sigma_lo)?,
                value_at_sigma_hi: classic_put(cfg, strike, cfg.sigma_hi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let boundary_strike = cfg.boundary_strike.unwrap_or(cfg.strikes[0]);
    let (tree, sol) = robust_put(cfg, boundary_strike, &controls)?;
    let boundary = boundary(cfg, &tree, &sol);

    let mut intervals = vec![[cfg.sigma_lo, cfg.sigma_hi]];
    intervals.extend(cfg.intervals.iter().copied());
    let widening = intervals
        .iter()
        .map(|&[lo, hi]| {
            let controls = interval_controls(cfg, lo, hi);
            let value = robust_put(cfg, boundary_strike, &controls)?.1.root_value();
            Ok(WidthRow {
                sigma_lo: lo,
                sigma_hi: hi,
                controls,
                value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let widening_nonincreasing = widening.iter().all(|inner| {
        widening.iter().all(|outer| {
            let contains = outer.sigma_lo <= inner.sigma_lo && inner.sigma_hi <= outer.sigma_hi;
            !contains || outer.value <= inner.value
        })
    });

    Ok(DemoReport {
        spot: cfg.spot,
        sigma_lo: cfg.sigma_lo,
        sigma_hi: cfg.sigma_hi,
        controls,
        maturity: cfg.maturity,
        n_steps: cfg.n_steps,
        strikes,
        boundary_strike,
        boundary,
        widening,
        widening_nonincreasing,
    })
}
