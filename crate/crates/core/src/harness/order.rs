//! Task-order sensitivity: tasks are meant to be independent, so running
//! them in reverse must not change any verdict.

use serde::Serialize;

use super::config::{run_seed, EvalConfig};
use super::manifest::BenchmarkManifest;
use super::HarnessError;
use crate::ledger::TaskResult;
use crate::provider::Provider;
use crate::strategies::{run_task, StrategySpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub success: bool,
    pub example_passed: bool,
    pub error: Option<String>,
}

impl From<&TaskResult> for Verdict {
    fn from(r: &TaskResult) -> Self {
        Verdict {
            success: r.success,
            example_passed: r.example_tests_passed,
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderDiff {
    pub task_id: String,
    pub given: Verdict,
    pub reversed: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderReport {
    pub strategy_id: String,
    pub seed: u64,
    pub tasks: usize,
    pub pass: bool,
    pub diffs: Vec<OrderDiff>,
}

/// Runs `strategy` over the manifest in the given and the reversed order,
/// sequentially and with the same run seed, each against a fresh provider.
pub fn order_sensitivity_check<P: Provider>(
    manifest: &BenchmarkManifest,
    strategy: &StrategySpec,
    base_seed: u64,
    mut make_provider: impl FnMut() -> P,
) -> OrderReport {
    let seed = run_seed(base_seed, &strategy.id(), 0);
    let tasks = manifest.tasks();
    let verifiers = manifest.verifiers();

    let provider = make_provider();
    let given: Vec<TaskResult> = tasks
        .iter()
        .map(|t| run_task(strategy, t, seed, &provider, &verifiers))
        .collect();
    let provider = make_provider();
    let mut reversed: Vec<TaskResult> = tasks
        .iter()
        .rev()
        .map(|t| run_task(strategy, t, seed, &provider, &verifiers))
        .collect();
    reversed.reverse();

    let diffs: Vec<OrderDiff> = given
        .iter()
        .zip(&reversed)
        .filter(|(g, r)| Verdict::from(*g) != Verdict::from(*r))
        .map(|(g, r)| OrderDiff {
            task_id: g.task_id.clone(),
            given: g.into(),
            reversed: r.into(),
        })
        .collect();
    OrderReport {
        strategy_id: strategy.id(),
        seed,
        tasks: tasks.len(),
        pass: diffs.is_empty(),
        diffs,
    }
}

/// [`order_sensitivity_check`] for a strategy of `config`, with providers
/// built from its provider block.
pub fn order_sensitivity_for_config(
    config: &EvalConfig,
    strategy_id: &str,
) -> Result<OrderReport, HarnessError> {
    config.validate()?;
    let spec = config
        .strategies
        .iter()
        .find(|s| s.id() == strategy_id)
        .ok_or_else(|| HarnessError::Config(format!("no strategy {strategy_id} in config")))?;
    // Building the provider once up front surfaces config errors before any run.
    config.provider.build(&config.manifest)?;
    Ok(order_sensitivity_check(
        &config.manifest,
        spec,
        config.base_seed,
        || {
            config
                .provider
                .build(&config.manifest)
                .expect("built once already")
        },
    ))
}
