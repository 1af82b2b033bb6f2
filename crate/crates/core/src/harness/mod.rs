//! End-to-end evaluation: configs, repeated runs, leaderboards, manifest lint
//! and the order-sensitivity check.

mod config;
mod leaderboard;
mod manifest;
mod order;

use thiserror::Error;

use crate::ledger::LedgerError;
use crate::optimizer::OptimizerError;
use crate::pricing::PricingError;

pub use config::{
    run_eval, run_eval_with, run_optimize, run_seed, task_order, EvalConfig, OptimizerSettings,
    ProviderConfig, SimProviderConfig, SplitSizes, TaskOrderPolicy,
};
pub use leaderboard::{
    aggregates_from_ledger, build_leaderboard, leaderboard_from_aggregates, CostBlock,
    FrontierVertex, Leaderboard, RunAggregate, RunRow, StatBlock, StrategyRow, TokenCount,
    LEADERBOARD_SCHEMA,
};
pub use manifest::{
    lint_levels, lint_manifest, BenchmarkManifest, ExternalTask, Generality, Holdout, LintReport,
    LintVerdict, SimTaskEntry, TaskEntry,
};
pub use order::{
    order_sensitivity_check, order_sensitivity_for_config, OrderDiff, OrderReport, Verdict,
};

/// Usage errors (bad command line).
pub const EXIT_USAGE: i32 = 64;
/// Malformed or inconsistent input data.
pub const EXIT_DATA: i32 = 65;
/// Invalid configuration.
pub const EXIT_CONFIG: i32 = 78;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }

    /// Prefixes the message with `what`, keeping the exit code.
    pub fn context(self, what: &str) -> HarnessError {
        match self {
            HarnessError::Config(m) => HarnessError::Config(format!("{what}: {m}")),
            HarnessError::Io(m) => HarnessError::Io(format!("{what}: {m}")),
            other => HarnessError::Data(format!("{what}: {other}")),
        }
    }
}
