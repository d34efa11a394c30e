use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envelope::robust_envelope;
use crate::error::{Error, Result};
use crate::model::{
    drift_eval, simulate_paths, simulate_paths_from, Branching, Control, ControlSet, DriftSpec,
    McControl, ScenarioTree, TreeSpec, DEFAULT_NODE_CAP,
};
use crate::numeric::{norm, ols_slope, CompensatedSum};
use crate::pathspace::{dist_dinfty, Path, Prefix, TimeGrid};
use crate::reward::RewardFunctional;

use super::{CheckReport, Tally, SWEEP_TOLERANCE};

/// Gaussian walk from zero with per-step standard deviation `scale · √Δ`.
fn random_walk(rng: &mut ChaCha8Rng, n_nodes: usize, dim: usize, step: f64) -> Vec<f64> {
    let mut v = vec![0.0; n_nodes * dim];
    for i in 1..n_nodes {
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            v[i * dim + j] = v[(i - 1) * dim + j] + step * z;
        }
    }
    v
}

fn perturb(rng: &mut ChaCha8Rng, values: &[f64], dim: usize, scale: f64) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i < dim {
                v
            } else {
                let z: f64 = rng.sample(StandardNormal);
                v + scale * z
            }
        })
        .collect()
}

/// `Y_{t1}(ω1) − Y_{t2}(ω2) ≤ ρ₀(d_∞)` on `n` random ordered pairs, plus `Y ≥ inf Y`.
///
/// Pairs cycle through identical paths, small perturbations and independent
/// paths; the first pair is the degenerate `t1 = t2, ω1 = ω2`.
pub fn check_y1(y: &RewardFunctional, grid: TimeGrid, n: usize, seed: u64) -> Result<CheckReport> {
    y.validate()?;
    grid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = grid.n_steps + 1;
    let step = grid.dt().sqrt();
    let mut tally = Tally::new("y1-modulus", SWEEP_TOLERANCE);
    for i in 0..n {
        let a = rng.random_range(0..nodes);
        let b = rng.random_range(0..nodes);
        let (mut k1, k2) = (a.min(b), a.max(b));
        let v1 = random_walk(&mut rng, nodes, 1, step);
        let v2 = match i % 3 {
            _ if i == 0 => {
                k1 = k2;
                v1.clone()
            }
            0 => v1.clone(),
            1 => perturb(&mut rng, &v1, 1, 0.05 * step),
            _ => random_walk(&mut rng, nodes, 1, step),
        };
        let w1 = Path::from_flat(grid, 1, v1)?;
        let w2 = Path::from_flat(grid, 1, v2)?;
        let (t1, t2) = (grid.time(k1), grid.time(k2));
        let d = dist_dinfty(t1, &w1, t2, &w2)?;
        let y1 = y.eval(&grid, k1, w1.as_prefix());
        let y2 = y.eval(&grid, k2, w2.as_prefix());
        let bound = y.modulus.eval(d);
        tally.observe(y1 - y2 - bound, || {
            format!(
                "t1 = {t1}, t2 = {t2}: Y1 - Y2 = {} > rho0({d}) = {bound}",
                y1 - y2
            )
        });
        let floor = y.lower_bound();
        tally.observe(floor - y1.min(y2), || {
            format!("Y below its lower bound {floor}")
        });
    }
    Ok(tally.finish(format!("{n} pairs")))
}

/// `|b(ω) − b(ω′)| ≤ κ‖ω − ω′‖_{0,t}` and `|b(t, 0, u)| ≤ κ(1 + |u|)` on `n`
/// random prefixes and controls from `controls`.
pub fn check_drift(
    spec: &DriftSpec,
    grid: TimeGrid,
    controls: &ControlSet,
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    spec.validate()?;
    grid.validate()?;
    let kappa = spec.lipschitz();
    let dim = controls.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = grid.dt().sqrt();
    let mut tally = Tally::new("drift-bounds", SWEEP_TOLERANCE);
    let mut diff = vec![0.0; dim];
    for i in 0..n {
        let k = rng.random_range(0..=grid.n_steps);
        let u = controls.get(rng.random_range(0..controls.len()));
        let w1 = random_walk(&mut rng, k + 1, dim, step);
        let w2 = if i % 2 == 0 {
            perturb(&mut rng, &w1, dim, 0.1 * step)
        } else {
            random_walk(&mut rng, k + 1, dim, step)
        };
        let b1 = drift_eval(spec, k, Prefix::new(&w1, dim), u);
        let b2 = drift_eval(spec, k, Prefix::new(&w2, dim), u);
        for (d, (x, y)) in diff.iter_mut().zip(b1.iter().zip(&b2)) {
            *d = x - y;
        }
        let lhs = norm(&diff);
        let sup = w1
            .chunks(dim)
            .zip(w2.chunks(dim))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        tally.observe(lhs - kappa * sup, || {
            format!("Lipschitz at k = {k}: |db| = {lhs} > kappa * {sup}")
        });
        let zero = vec![0.0; (k + 1) * dim];
        let b0 = norm(&drift_eval(spec, k, Prefix::new(&zero, dim), u));
        tally.observe(b0 - kappa * (1.0 + u.norm()), || {
            format!("growth at k = {k}: |b(0)| = {b0}")
        });
    }
    Ok(tally.finish(format!("{n} samples, kappa = {kappa}")))
}

/// Sensitivity of the root envelope value to the path before the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub grid: TimeGrid,
    /// Grid index of the tree root; the history covers nodes `0..=offset`.
    pub offset: usize,
    pub drift: DriftSpec,
    pub controls: Vec<f64>,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default)]
    pub branching: Branching,
    pub reward: RewardFunctional,
    pub n_pairs: usize,
    /// Standard deviation of the history perturbation.
    pub perturbation: f64,
    pub seed: u64,
}

fn default_cap() -> f64 {
    1.0
}

fn root_value(cfg: &ContinuityConfig, controls: &ControlSet, history: &[f64]) -> Result<f64> {
    let spec = TreeSpec {
        grid: cfg.grid,
        drift: cfg.drift.clone(),
        controls: controls.clone(),
        branching: cfg.branching,
        node_cap: DEFAULT_NODE_CAP,
    };
    let tree = ScenarioTree::expand_from(spec, history, cfg.offset)?;
    Ok(robust_envelope(&tree, &cfg.reward, 0.0)?.root_value())
}

/// `|Z̄_root(ω1) − Z̄_root(ω2)| ≤ ρ₀(‖ω1 − ω2‖_{0,t})` when the drift does not
/// look at the history; otherwise reports the fitted `ρ₁` slope only.
pub fn check_continuity_in_prehistory(cfg: &ContinuityConfig) -> Result<CheckReport> {
    cfg.grid.validate()?;
    cfg.reward.validate()?;
    if cfg.offset > cfg.grid.n_steps {
        return Err(Error::invalid("continuity offset is past the grid end"));
    }
    let controls = ControlSet::scalar(&cfg.controls, cfg.cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = cfg.grid.dt().sqrt();
    let bounded = cfg.drift.ignores_history();
    let mut tally = Tally::new("continuity-in-prehistory", SWEEP_TOLERANCE);
    let mut rho1 = 0.0f64;
    for i in 0..cfg.n_pairs {
        let h1 = random_walk(&mut rng, cfg.offset + 1, 1, step);
        let h2 = if i == 0 {
            h1.clone()
        } else {
            perturb(&mut rng, &h1, 1, cfg.perturbation)
        };
        let dist = h1
            .iter()
            .zip(&h2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dz = (root_value(cfg, &controls, &h1)? - root_value(cfg, &controls, &h2)?).abs();
        if dist > 0.0 {
            rho1 = rho1.max(dz / dist);
        }
        if bounded {
            let bound = cfg.reward.modulus.eval(dist);
            tally.observe(dz - bound, || {
                format!("|dZ| = {dz} > rho0({dist}) = {bound}")
            });
        } else {
            tally.observe(
                if dz.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    f64::NAN
                },
                String::new,
            );
        }
    }
    let kind = if bounded {
        "bounded by rho0"
    } else {
        "history-dependent drift, report only"
    };
    Ok(tally.finish(format!(
        "{} pairs, {kind}, fitted rho1 slope {rho1:.6}",
        cfg.n_pairs
    )))
}

/// Monte Carlo scaling of `E[sup_{k ≤ n} |X_k − x0|^p]` in `nΔ` at fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentConfig {
    #[serde(default)]
    pub x0: f64,
    pub control: f64,
    pub drift: DriftSpec,
    pub n_steps: usize,
    /// `Δ = 2^-e` for `e` in this inclusive range.
    pub dt_exponents: (u32, u32),
    pub n_paths: usize,
    pub p: u32,
    pub seed: u64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            control: 1.0,
            drift: DriftSpec::zero(),
            n_steps: 16,
            dt_exponents: (4, 8),
            n_paths: 100_000,
            p: 1,
            seed: 1,
        }
    }
}

/// Fitted log-log slope within `[0.4p, 0.6p]`; for `p = 2` and zero drift also
/// Doob's bound `E[sup |X − x0|²] ≤ 4u²nΔ`.
pub fn check_sde_moments(cfg: &MomentConfig) -> Result<CheckReport> {
    let (lo, hi) = cfg.dt_exponents;
    if lo >= hi || cfg.p == 0 || cfg.n_steps == 0 {
        return Err(Error::invalid(
            "moment check needs two step sizes, p >= 1 and n >= 1",
        ));
    }
    let control = McControl::Constant(Control::scalar(cfg.control)?);
    let p = cfg.p as i32;
    let mut tally = Tally::new("sde-moments", 0.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut table = Vec::new();
    let doob = cfg.p == 2 && matches!(cfg.drift, DriftSpec::Zero { .. });
    for e in lo..=hi {
        let dt = (-(e as f64)).exp2();
        let horizon = cfg.n_steps as f64 * dt;
        let grid = TimeGrid::new(0.0, horizon, cfg.n_steps)?;
        // independent noise per step size; a shared seed would make the scaling exact by construction
        let seed = cfg.seed.wrapping_add(u64::from(e));
        let sample = simulate_paths(grid, &[cfg.x0], &cfg.drift, &control, cfg.n_paths, seed)?;
        let moment = sample
            .iter()
            .map(|path| {
                path.iter()
                    .map(|v| (v[0] - cfg.x0).abs())
                    .fold(0.0, f64::max)
                    .powi(p)
            })
            .collect::<CompensatedSum>()
            .value()
            / cfg.n_paths as f64;
        if doob {
            let bound = 4.0 * cfg.control * cfg.control * horizon;
            tally.observe(moment - bound, || {
                format!("Doob bound at dt = 2^-{e}: {moment} > {bound}")
            });
        }
        table.push(format!("2^-{e}:{moment:.6e}"));
        xs.push(horizon.ln());
        ys.push(moment.ln());
    }
    if ys.iter().all(|y| y.is_infinite() && *y < 0.0) {
        // degenerate dynamics: every moment is zero, which any bound allows
        return Ok(tally.finish(format!("all moments zero [{}]", table.join(", "))));
    }
    let slope = ols_slope(&xs, &ys);
    let (w_lo, w_hi) = (0.4 * cfg.p as f64, 0.6 * cfg.p as f64);
    tally.observe((w_lo - slope).max(slope - w_hi), || {
        format!("slope {slope} outside [{w_lo}, {w_hi}]")
    });
    Ok(tally.finish(format!(
        "p = {}, slope {slope:.4} in window [{w_lo}, {w_hi}]; moments [{}]",
        cfg.p,
        table.join(", ")
    )))
}

/// Two histories driven by the same noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub grid: TimeGrid,
    pub offset: usize,
    pub drift: DriftSpec,
    pub control: f64,
    pub n_paths: usize,
    pub perturbation: f64,
    /// Relative slack on the bound.
    #[serde(default = "default_slack")]
    pub slack: f64,
    pub seed: u64,
}

fn default_slack() -> f64 {
    0.2
}

/// `E[sup |X^ω − X^ω′|] ≤ κ e^{κh} h ‖ω − ω′‖_{0,t}` over the remaining
/// horizon `h`, with `X` the increments after the root, up to the slack.
pub fn check_lipschitz_transfer(cfg: &TransferConfig) -> Result<CheckReport> {
    cfg.grid.validate()?;
    if cfg.offset >= cfg.grid.n_steps {
        return Err(Error::invalid("transfer offset leaves nothing to simulate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = cfg.grid.dt().sqrt();
    let h1 = random_walk(&mut rng, cfg.offset + 1, 1, step);
    let h2 = perturb(&mut rng, &h1, 1, cfg.perturbation);
    let dist = h1
        .iter()
        .zip(&h2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let control = McControl::Constant(Control::scalar(cfg.control)?);
    let a = simulate_paths_from(
        cfg.grid,
        &h1,
        cfg.offset,
        &cfg.drift,
        &control,
        cfg.n_paths,
        cfg.seed,
    )?;
    let b = simulate_paths_from(
        cfg.grid,
        &h2,
        cfg.offset,
        &cfg.drift,
        &control,
        cfg.n_paths,
        cfg.seed,
    )?;
    let mean = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| {
            let (p0, q0) = (p.at(0)[0], q.at(0)[0]);
            p.iter()
                .zip(q.iter())
                .map(|(x, y)| ((x[0] - p0) - (y[0] - q0)).abs())
                .fold(0.0, f64::max)
        })
        .collect::<CompensatedSum>()
        .value()
        / cfg.n_paths as f64;
    let kappa = cfg.drift.lipschitz();
    let h = cfg.grid.time(cfg.grid.n_steps) - cfg.grid.time(cfg.offset);
    let bound = kappa * (kappa * h).exp() * h * dist * (1.0 + cfg.slack);
    let mut tally = Tally::new("lipschitz-transfer", 0.0);
    tally.observe(mean - bound, || format!("E[sup|dX|] = {mean} > {bound}"));
    Ok(tally.finish(format!(
        "history distance {dist:.6e}, E[sup|dX|] {mean:.6e}, bound {bound:.6e}"
    )))
}
