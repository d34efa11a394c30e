use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathspace::Prefix;

use super::Control;

/// Path-dependent drift `b(t, ω, u)` with its Lipschitz/growth constant `kappa`.
///
/// Every kind reads only the state prefix through the current node, so the
/// drift is adapted by construction. Componentwise kinds act on each
/// coordinate independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero {
        kappa: f64,
    },
    /// `b = rate · (level − x_k)`.
    MeanReversion {
        kappa: f64,
        rate: f64,
        level: f64,
    },
    /// `b = −min(kappa, max_{i ≤ k} x_i)`.
    RunningMax {
        kappa: f64,
    },
    /// Piecewise-linear in the current state with flat extrapolation.
    CustomTable {
        kappa: f64,
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl DriftSpec {
    pub fn zero() -> Self {
        DriftSpec::Zero { kappa: 1.0 }
    }

    /// Declared parameter `κ`.
    pub fn kappa(&self) -> f64 {
        match *self {
            DriftSpec::Zero { kappa }
            | DriftSpec::MeanReversion { kappa, .. }
            | DriftSpec::RunningMax { kappa }
            | DriftSpec::CustomTable { kappa, .. } => kappa,
        }
    }

    /// Constant for the Lipschitz and growth bounds. For running-max the
    /// parameter is only the cap; the map itself is 1-Lipschitz in the sup norm.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            DriftSpec::RunningMax { kappa } => kappa.max(1.0),
            _ => self.kappa(),
        }
    }

    /// True when the drift does not read the state history at all.
    pub fn ignores_history(&self) -> bool {
        matches!(self, DriftSpec::Zero { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let kappa = self.kappa();
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("drift kappa must be positive and finite"));
        }
        match self {
            DriftSpec::MeanReversion { rate, level, .. } => {
                if !(rate.is_finite() && level.is_finite()) {
                    return Err(Error::invalid("mean-reversion parameters must be finite"));
                }
            }
            DriftSpec::CustomTable { xs, ys, .. } => {
                if xs.is_empty() || xs.len() != ys.len() {
                    return Err(Error::invalid(
                        "custom drift table needs equally many xs and ys",
                    ));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("custom drift xs must be increasing"));
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("custom drift table must be finite"));
                }
            }
            DriftSpec::Zero { .. } | DriftSpec::RunningMax { .. } => {}
        }
        Ok(())
    }
}

/// Evaluates `b` at node `k` on the state prefix (length `k + 1`).
pub fn drift_eval(spec: &DriftSpec, k: usize, prefix: Prefix<'_>, _u: &Control) -> Vec<f64> {
    debug_assert_eq!(prefix.len(), k + 1);
    let dim = prefix.dim();
    let current = prefix.at(k);
    match spec {
        DriftSpec::Zero { .. } => vec![0.0; dim],
        DriftSpec::MeanReversion { rate, level, .. } => {
            current.iter().map(|x| rate * (level - x)).collect()
        }
        DriftSpec::RunningMax { kappa } => (0..dim)
            .map(|j| {
                let running = prefix
                    .through(k)
                    .iter()
                    .map(|v| v[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                -kappa.min(running)
            })
            .collect(),
        DriftSpec::CustomTable { xs, ys, .. } => current
            .iter()
            .map(|&x| interpolate_table(xs, ys, x))
            .collect(),
    }
}

pub fn interpolate_table(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(spec: &DriftSpec, prefix: &[f64]) -> f64 {
        let u = Control::scalar(1.0).unwrap();
        drift_eval(spec, prefix.len() - 1, Prefix::new(prefix, 1), &u)[0]
    }

    #[test]
    fn zero_drift() {
        assert_eq!(eval(&DriftSpec::zero(), &[0.0, 3.0, -1.0]), 0.0);
    }

    #[test]
    fn mean_reversion_fixed_point() {
        let spec = DriftSpec::MeanReversion {
            kappa: 1.0,
            rate: 0.7,
            level: 0.25,
        };
        assert_eq!(eval(&spec, &[0.0, 0.25]), 0.0);
        assert!((eval(&spec, &[0.0, 1.25]) + 0.7).abs() < 1e-15);
    }

    #[test]
    fn running_max_caps_at_kappa() {
        let spec = DriftSpec::RunningMax { kappa: 1.0 };
        assert_eq!(eval(&spec, &[0.0, 2.0, 1.0]), -1.0);
        assert_eq!(eval(&spec, &[0.0, 0.5, 0.25]), -0.5);
    }

    #[test]
    fn custom_table_interpolates_and_extrapolates_flat() {
        let spec = DriftSpec::CustomTable {
            kappa: 1.0,
            xs: vec![-1.0, 1.0],
            ys: vec![1.0, -1.0],
        };
        assert_eq!(eval(&spec, &[0.0, 0.5]), -0.5);
        assert_eq!(eval(&spec, &[0.0, 3.0]), -1.0);
        assert_eq!(eval(&spec, &[0.0, -3.0]), 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"kind":"zero","kappa":1.0,"rate":2.0}"#;
        assert!(serde_json::from_str::<DriftSpec>(bad).is_err());
        let good = r#"{"kind":"running-max","kappa":1.0}"#;
        assert_eq!(
            serde_json::from_str::<DriftSpec>(good).unwrap(),
            DriftSpec::RunningMax { kappa: 1.0 }
        );
    }
}
