//! Brute-force controller-stopper game and pasting of strategies.

mod oracle;
mod pasting;
mod prefix;
mod rules;
mod strategy;

pub use oracle::{expected_reward, game_values, Game, GameReport, SaddlePoint, GAME_TOLERANCE};
pub use pasting::{
    node_law, paste_strategies, pasting_check, prefix_law, PastingBound, PastingReport,
    PrefixEvent, PASTING_TOLERANCE,
};
pub use prefix::PrefixTable;
#[allow(unused_imports)]
pub(crate) use rules::RuleSweep;
pub use rules::{
    count_strategies, enumerate_stopping_rules, enumerate_strategies, for_each_strategy,
    for_each_strategy_until, StoppingRule, MAX_RULE_BITS, MAX_STRATEGIES,
};
pub use strategy::ControlStrategy;
