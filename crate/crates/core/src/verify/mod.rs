//! One callable check per claim the solver relies on.
//!
//! Every check returns a [`CheckReport`] with the worst signed excess
//! `lhs − rhs` it saw; a check passes when that excess never exceeds its
//! tolerance. Structural identities use tolerance 0, single-sweep float
//! identities 1e-12, enumeration-vs-recursion comparisons 1e-9, and
//! statistical checks use fixed seeds with pre-registered windows.

mod pasting;
mod sampled;
mod tree;

use serde::Serialize;

pub use pasting::{check_pasting, RandomPasting};
pub use sampled::{
    check_continuity_in_prehistory, check_drift, check_lipschitz_transfer, check_sde_moments,
    check_y1, ContinuityConfig, MomentConfig, TransferConfig,
};
pub use tree::{
    check_dpp, check_dpp_random_horizon, check_envelope_basic, check_martingale_to_tau,
    check_shift_consistency, check_supermartingale, check_tau_monotone, HittingTime,
};

/// Tolerance for enumeration-vs-recursion comparisons.
pub const ENUMERATION_TOLERANCE: f64 = 1e-9;
/// Tolerance for identities produced by a single floating-point sweep.
pub const SWEEP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub checked: u64,
    /// Largest `lhs − rhs` observed (0 when nothing was checked).
    pub worst_violation: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Running worst case of a check.
pub(crate) struct Tally {
    name: &'static str,
    tolerance: f64,
    checked: u64,
    worst: f64,
    worst_at: Option<String>,
    failed: bool,
}

impl Tally {
    pub fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            checked: 0,
            worst: f64::NEG_INFINITY,
            worst_at: None,
            failed: false,
        }
    }

    /// Records one comparison; `at` describes it and is only built for new worst cases.
    pub fn observe(&mut self, excess: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        // NaN counts as the worst possible failure
        let e = if excess.is_nan() {
            f64::INFINITY
        } else {
            excess
        };
        if e > self.worst {
            self.worst = e;
            self.worst_at = Some(at());
        }
        self.failed |= e > self.tolerance;
    }

    pub fn finish(self, summary: impl Into<String>) -> CheckReport {
        let summary = summary.into();
        let detail = match (&self.worst_at, self.failed) {
            (Some(at), true) => format!("{summary}; worst at {at}"),
            _ => summary,
        };
        CheckReport {
            name: self.name.to_string(),
            passed: !self.failed,
            checked: self.checked,
            worst_violation: if self.checked == 0 { 0.0 } else { self.worst },
            tolerance: self.tolerance,
            detail,
        }
    }
}
