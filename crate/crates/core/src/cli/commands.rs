use serde::Serialize;

use crate::envelope::{robust_envelope, EnvelopeSolution};
use crate::error::{Error, Result};
use crate::game::{game_values, GameReport};
use crate::model::{ScenarioTree, TreeSummary};
use crate::numeric::{norm, CompensatedSum};
use crate::pathspace::TimeGrid;
use crate::reward::tree_rewards;
use crate::verify::{
    check_continuity_in_prehistory, check_dpp, check_dpp_random_horizon, check_drift,
    check_envelope_basic, check_lipschitz_transfer, check_martingale_to_tau, check_pasting,
    check_sde_moments, check_shift_consistency, check_supermartingale, check_tau_monotone,
    check_y1, CheckReport, ContinuityConfig, TransferConfig, ENUMERATION_TOLERANCE,
};

use super::config::Config;

/// Check names accepted by the verify suite selector, in run order.
pub const CHECKS: &[&str] = &[
    "envelope-basic",
    "supermartingale",
    "martingale-to-tau-star",
    "dpp",
    "dpp-random-horizon",
    "tau-monotone",
    "shift-consistency",
    "game-oracle",
    "pasting",
    "y1-modulus",
    "drift-bounds",
    "continuity-in-prehistory",
    "sde-moments",
    "lipschitz-transfer",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSummary {
    pub time_index: usize,
    pub time: f64,
    pub nodes: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub z_mean: f64,
    pub stop_fraction: f64,
    /// Smallest `|state|` among stopping nodes.
    pub boundary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlFrequency {
    pub control: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub tree: TreeSummary,
    pub delta: f64,
    pub root_value: f64,
    pub root_reward: f64,
    pub root_stops: bool,
    pub slices: Vec<SliceSummary>,
    pub argmin_frequency: Vec<ControlFrequency>,
}

fn summarize(tree: &ScenarioTree, sol: &EnvelopeSolution) -> SolveReport {
    let slices = (0..=tree.depth())
        .map(|d| {
            let level = tree.level(d);
            let nodes = level.len();
            let mean: CompensatedSum = level.clone().map(|n| sol.z[n]).collect();
            let stops = level.clone().filter(|&n| sol.stop[n]).count();
            SliceSummary {
                time_index: tree.offset() + d,
                time: tree.grid().time(tree.offset() + d),
                nodes,
                z_min: level
                    .clone()
                    .map(|n| sol.z[n])
                    .fold(f64::INFINITY, f64::min),
                z_max: level
                    .clone()
                    .map(|n| sol.z[n])
                    .fold(f64::NEG_INFINITY, f64::max),
                z_mean: mean.value() / nodes as f64,
                stop_fraction: stops as f64 / nodes as f64,
                boundary: level
                    .filter(|&n| sol.stop[n])
                    .map(|n| norm(tree.state(n)))
                    .reduce(f64::min),
            }
        })
        .collect();
    let mut counts = vec![0usize; tree.n_controls()];
    for c in sol.argmin.iter().flatten() {
        counts[*c] += 1;
    }
    let argmin_frequency = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| ControlFrequency {
            control: tree.controls().get(i).entries().to_vec(),
            count,
        })
        .collect();
    SolveReport {
        tree: tree.summary(),
        delta: sol.delta,
        root_value: sol.root_value(),
        root_reward: sol.y[0],
        root_stops: sol.stop[0],
        slices,
        argmin_frequency,
    }
}

/// Robust envelope on the configured tree.
pub fn cmd_solve(config: &Config) -> Result<SolveReport> {
    let tree = config.tree()?;
    let sol = robust_envelope(&tree, &config.reward()?, config.solver.delta)?;
    log::info!(
        "solved {} nodes, root value {}",
        tree.n_nodes(),
        sol.root_value()
    );
    Ok(summarize(&tree, &sol))
}

/// Game values by full enumeration on the configured tree.
pub fn cmd_oracle(config: &Config) -> Result<GameReport> {
    let tree = config.tree()?;
    let report = game_values(&tree, &config.reward()?)?;
    if !report.minimax_ordered {
        // cannot happen with monotone rounding; surface it loudly if it does
        log::error!(
            "minimax inequality violated: {} > {}",
            report.lower,
            report.upper
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub mutated: bool,
    pub checks: Vec<CheckReport>,
}

/// Resolves the suite selector against [`CHECKS`].
pub fn select_checks(selector: Option<&[String]>) -> Result<Vec<&'static str>> {
    let Some(names) = selector else {
        return Ok(CHECKS.to_vec());
    };
    let names: Vec<&str> = names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::Usage(format!(
            "empty suite selector; choose from {}",
            CHECKS.join(", ")
        )));
    }
    CHECKS
        .iter()
        .filter(|c| names.contains(c))
        .copied()
        .map(Ok)
        .chain(names.iter().filter(|n| !CHECKS.contains(n)).map(|n| {
            Err(Error::Usage(format!(
                "unknown check `{n}`; choose from {}",
                CHECKS.join(", ")
            )))
        }))
        .collect()
}

fn failed(name: &str, err: Error) -> CheckReport {
    CheckReport {
        name: name.to_string(),
        passed: false,
        checked: 0,
        worst_violation: 0.0,
        tolerance: 0.0,
        detail: format!("error: {err}"),
    }
}

fn renamed(mut r: CheckReport, name: String) -> CheckReport {
    r.name = name;
    r
}

/// Runs the selected checks. `mutate` perturbs the root envelope value by 0.1
/// before the tree checks, which must make the suite fail.
pub fn cmd_verify(
    config: &Config,
    selector: Option<&[String]>,
    seed: Option<u64>,
    mutate: bool,
) -> Result<VerifyReport> {
    let selector = selector.or(config.verify.suite.as_deref());
    let selected = select_checks(selector)?;
    let seed = seed.unwrap_or(config.verify.seed);
    let v = &config.verify;
    let tree = config.tree()?;
    let reward = config.reward()?;
    let grid = config.grid()?;
    let mut sol = robust_envelope(&tree, &reward, 0.0)?;
    if mutate {
        sol.z[0] += 0.1;
    }
    let mut checks = Vec::new();
    let mut push = |name: &str, r: Result<CheckReport>| {
        checks.push(r.unwrap_or_else(|e| failed(name, e)));
    };
    for name in selected {
        log::info!("running {name}");
        match name {
            "envelope-basic" => push(name, check_envelope_basic(&tree, &sol)),
            "supermartingale" => push(name, check_supermartingale(&tree, &sol)),
            "martingale-to-tau-star" => push(name, check_martingale_to_tau(&tree, &sol)),
            "dpp" => {
                let times = v
                    .dpp_times
                    .clone()
                    .unwrap_or_else(|| (tree.offset()..=tree.offset() + tree.depth()).collect());
                for s in times {
                    let label = format!("dpp(s={s})");
                    push(
                        &label,
                        check_dpp(&tree, &sol, s).map(|r| renamed(r, label.clone())),
                    );
                }
            }
            "dpp-random-horizon" => {
                for nu in &v.horizons {
                    let label = format!("dpp-random-horizon({})", serde_json::to_string(nu)?);
                    push(
                        &label,
                        check_dpp_random_horizon(&tree, &sol, nu)
                            .map(|r| renamed(r, label.clone())),
                    );
                }
            }
            "tau-monotone" => push(name, check_tau_monotone(&tree, &sol)),
            "shift-consistency" => {
                for d in 0..=tree.depth() {
                    let node = tree.level(d).end - 1;
                    let label = format!("shift-consistency(node={node})");
                    push(
                        &label,
                        check_shift_consistency(&tree, node).map(|r| renamed(r, label.clone())),
                    );
                }
            }
            "game-oracle" => push(name, game_check(&tree, &reward, &sol)),
            "pasting" => push(
                name,
                check_pasting(
                    &tree,
                    &tree_rewards(&tree, &reward),
                    v.pasting_trials,
                    seed.wrapping_add(1),
                ),
            ),
            "y1-modulus" => push(
                name,
                check_y1(&reward, grid, v.y1_pairs, seed.wrapping_add(2)),
            ),
            "drift-bounds" => push(
                name,
                check_drift(
                    &config.dynamics.drift,
                    grid,
                    tree.controls(),
                    v.drift_samples,
                    seed.wrapping_add(3),
                ),
            ),
            "continuity-in-prehistory" => push(name, continuity(config, seed.wrapping_add(4))),
            "sde-moments" => {
                let mut m = v.moments.clone();
                m.seed = seed.wrapping_add(5);
                push(name, check_sde_moments(&m));
            }
            "lipschitz-transfer" => push(name, transfer(config, grid, seed.wrapping_add(6))),
            _ => unreachable!("selector only yields known checks"),
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        passed,
        mutated: mutate,
        checks,
    })
}

fn game_check(
    tree: &ScenarioTree,
    reward: &crate::reward::RewardFunctional,
    sol: &EnvelopeSolution,
) -> Result<CheckReport> {
    let g = game_values(tree, reward)?;
    // compare against the (possibly mutated) solution actually under test
    let root = sol.root_value();
    let gap = [g.lower, g.upper, g.value_at_tau_star]
        .iter()
        .map(|v| (v - root).abs())
        .fold(g.max_gap, f64::max);
    let ordered = g.minimax_ordered;
    Ok(CheckReport {
        name: "game-oracle".into(),
        passed: ordered && gap <= ENUMERATION_TOLERANCE,
        checked: g.rules_enumerated + g.strategies_enumerated,
        worst_violation: gap,
        tolerance: ENUMERATION_TOLERANCE,
        detail: format!(
            "lower {} upper {} envelope {} at tau* {}; minimax ordered: {ordered}; saddle: {}",
            g.lower,
            g.upper,
            root,
            g.value_at_tau_star,
            g.saddle.is_some()
        ),
    })
}

fn continuity(config: &Config, seed: u64) -> Result<CheckReport> {
    let grid = config.grid()?;
    let controls = config
        .controls
        .as_ref()
        .and_then(|c| c.values.clone())
        .ok_or_else(|| Error::Config("continuity check needs scalar control values".into()))?;
    let p = &config.verify.continuity;
    let reward = config.reward()?;
    let cfg = ContinuityConfig {
        grid,
        offset: p.offset.unwrap_or(grid.n_steps / 2),
        drift: config.dynamics.drift.clone(),
        controls,
        cap: config.controls.as_ref().map_or(1.0, |c| c.cap),
        branching: config.dynamics.branching,
        reward,
        n_pairs: p.n_pairs,
        perturbation: p.perturbation,
        seed,
    };
    check_continuity_in_prehistory(&cfg)
}

fn transfer(config: &Config, grid: TimeGrid, seed: u64) -> Result<CheckReport> {
    let p = &config.verify.transfer;
    let control = config.control_set()?;
    if control.dim() != 1 {
        return Err(Error::Config("transfer check runs in one dimension".into()));
    }
    let cfg = TransferConfig {
        grid: TimeGrid::new(grid.t_start, grid.t_end, p.n_steps)?,
        offset: p.offset,
        drift: config.dynamics.drift.clone(),
        control: control.get(0).entry(0, 0),
        n_paths: p.n_paths,
        perturbation: p.perturbation,
        slack: p.slack,
        seed,
    };
    check_lipschitz_transfer(&cfg)
}
