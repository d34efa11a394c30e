//! Robust optimal stopping under volatility uncertainty on finite scenario trees.
//!
//! The solver computes the upper Snell envelope `Z̄ = inf_P sup_τ E_P[Y_τ]` over a
//! family of controlled-diffusion laws by one-step dynamic programming, and the
//! [`game`] module certifies the result by brute-force enumeration of the
//! controller-stopper game on small instances.
//!
//! Module map:
//! - [`pathspace`]: discrete canonical paths, concatenation, truncation, shifting, `d_∞`.
//! - [`model`]: drift, control sets, Euler step kernels, scenario trees, Monte Carlo.
//! - [`reward`]: path-dependent reward functionals and their continuity moduli.
//! - [`envelope`]: robust and classic Snell envelopes, nonlinear expectation, hitting times.
//! - [`game`]: stopping rules, control strategies, minimax enumeration, pasting.
//! - [`verify`]: one callable check per structural property, with pass/fail reports.
//! - [`cli`]: JSON configuration, subcommands and report writers.

pub mod cli;
pub mod envelope;
pub mod error;
pub mod game;
pub mod model;
pub mod numeric;
pub mod pathspace;
pub mod reward;
pub mod verify;

pub use error::{Error, Result};
