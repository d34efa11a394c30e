//! Configuration-driven front end: `solve`, `oracle`, `verify` and `demo`.

mod commands;
mod config;
mod demo;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{
    cmd_oracle, cmd_solve, cmd_verify, select_checks, ControlFrequency, SliceSummary, SolveReport,
    VerifyReport, CHECKS,
};
pub use config::{
    Config, ContinuityParams, ControlsConfig, DemoConfig, DynamicsConfig, RewardConfig,
    SolverConfig, TransferParams, VerifyConfig,
};
pub use demo::{
    classic_put, cmd_demo, interval_controls, robust_put, BoundaryRow, DemoReport, StrikeRow,
    WidthRow,
};
pub use output::{fmt_num, fmt_opt, write_csv, write_json};

#[derive(Debug, Parser)]
#[command(
    name = "robuststop",
    version,
    about = "Robust optimal stopping solver and verifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for reports.
    #[arg(long, default_value = "robuststop-out")]
    pub out: PathBuf,
    /// Base seed for sampled checks (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Robust Snell envelope on the configured tree.
    Solve(Common),
    /// Controller-stopper game values by full enumeration.
    Oracle(Common),
    /// Run the verification checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Perturb the solution before checking; the suite must fail.
        #[arg(long)]
        mutate: bool,
        /// Comma-separated check names.
        #[arg(long, value_delimiter = ',')]
        suite: Option<Vec<String>>,
    },
    /// American put under a volatility interval.
    Demo(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::Oracle(c) | Command::Demo(c) => c,
            Command::Verify { common, .. } => common,
        }
    }
}

/// Runs one command and writes its reports. Returns whether everything it
/// checked passed.
pub fn run(cli: &Cli) -> Result<bool> {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the existing pool
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let config = Config::load(&common.config)?;
    let out = &common.out;
    match &cli.command {
        Command::Solve(_) => {
            let r = cmd_solve(&config)?;
            write_json(out, "report.json", &r)?;
            let rows: Vec<Vec<String>> = r
                .slices
                .iter()
                .map(|s| {
                    vec![
                        s.time_index.to_string(),
                        fmt_num(s.time),
                        s.nodes.to_string(),
                        fmt_num(s.z_min),
                        fmt_num(s.z_max),
                        fmt_num(s.z_mean),
                        fmt_num(s.stop_fraction),
                        fmt_opt(s.boundary),
                    ]
                })
                .collect();
            write_csv(
                out,
                "slices.csv",
                &[
                    "time_index",
                    "time",
                    "nodes",
                    "z_min",
                    "z_max",
                    "z_mean",
                    "stop_fraction",
                    "boundary",
                ],
                &rows,
            )?;
            println!("root value {}", fmt_num(r.root_value));
            Ok(true)
        }
        Command::Oracle(_) => {
            let r = cmd_oracle(&config)?;
            write_json(out, "report.json", &r)?;
            println!(
                "lower {} upper {} envelope {} at tau* {} agree {}",
                fmt_num(r.lower),
                fmt_num(r.upper),
                fmt_num(r.envelope_root),
                fmt_num(r.value_at_tau_star),
                r.agree
            );
            Ok(r.agree)
        }
        Command::Verify { mutate, suite, .. } => {
            let r = cmd_verify(&config, suite.as_deref(), common.seed, *mutate)?;
            write_json(out, "report.json", &r)?;
            for c in &r.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: {}", c.name, c.detail);
            }
            Ok(r.passed)
        }
        Command::Demo(_) => {
            let demo = config
                .demo
                .as_ref()
                .ok_or_else(|| Error::Config("missing section: demo".into()))?;
            let r = cmd_demo(demo)?;
            write_json(out, "report.json", &r)?;
            let strikes: Vec<Vec<String>> = r
                .strikes
                .iter()
                .map(|s| {
                    vec![
                        fmt_num(s.strike),
                        fmt_num(s.robust_value),
                        fmt_num(s.value_at_sigma_lo),
                        fmt_num(s.value_at_sigma_hi),
                    ]
                })
                .collect();
            write_csv(
                out,
                "value_vs_strike.csv",
                &["strike", "robust_value", "value_sigma_lo", "value_sigma_hi"],
                &strikes,
            )?;
            let boundary: Vec<Vec<String>> = r
                .boundary
                .iter()
                .map(|b| {
                    vec![
                        b.time_index.to_string(),
                        fmt_num(b.time),
                        fmt_opt(b.max_exercise_spot),
                        fmt_opt(b.min_continuation_spot),
                    ]
                })
                .collect();
            write_csv(
                out,
                "exercise_boundary.csv",
                &[
                    "time_index",
                    "time",
                    "max_exercise_spot",
                    "min_continuation_spot",
                ],
                &boundary,
            )?;
            let widening: Vec<Vec<String>> = r
                .widening
                .iter()
                .map(|w| vec![fmt_num(w.sigma_lo), fmt_num(w.sigma_hi), fmt_num(w.value)])
                .collect();
            write_csv(
                out,
                "widening.csv",
                &["sigma_lo", "sigma_hi", "value"],
                &widening,
            )?;
            for s in &r.strikes {
                println!(
                    "strike {} robust value {}",
                    fmt_num(s.strike),
                    fmt_num(s.robust_value)
                );
            }
            Ok(r.widening_nonincreasing)
        }
    }
}
