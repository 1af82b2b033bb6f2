//! Cost-controlled evaluation of AI agents.
//!
//! The crate records every model call of an evaluation as token counts in an
//! append-only [`ledger`], prices those counts against dated [`pricing`]
//! sheets, aggregates repeated runs with Student-t intervals ([`stats`]),
//! and places agents on a convex accuracy-cost frontier ([`pareto`]).
//!
//! The baseline agents (zero-shot, retry, warming, escalation) live in
//! [`strategies`] and run against any [`provider::Provider`], including a
//! deterministic simulator whose draws are keyed by a counter-based PRNG so
//! that runs replay exactly. [`optimizer`] jointly searches agent
//! configurations for validation accuracy and prompt-token cost, and
//! [`harness`] ties everything into repeated evaluations, leaderboards,
//! holdout linting and order-sensitivity checks.

pub mod harness;
pub mod ledger;
pub mod optimizer;
pub mod pareto;
pub mod pricing;
pub mod provider;
pub mod stats;
pub mod strategies;

mod decimal_str;

pub use ledger::{CallPurpose, CallRecord, EvalLedger, RunRecord, TaskResult};
pub use pareto::{Accuracy, Frontier, MixturePolicy, ParetoPoint, Probability};
pub use pricing::{CostBreakdown, Currency, Money, PriceSheet, TokenUsage};
pub use stats::SummaryStat;
