//! Joint accuracy/token optimization of agent configurations.
//!
//! Three phases, each recorded in an optimization ledger:
//! bootstrap a pool of demonstrations from the training split
//! (`optimize:bootstrap`), evaluate sampled configurations on the validation
//! split (`optimize:trial`, one run per trial), and re-evaluate the
//! non-dominated configurations on the development split (`optimize:select`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{CallPurpose, CallRecord, EvalLedger, LedgerError, RunRecord, TaskResult};
use crate::pareto::non_dominated_indices;
use crate::pricing::{reprice, CostBreakdown, Money, PriceSheet, PricingError, TokenUsage};
use crate::provider::{
    derive_seed, CompletionRequest, DrawKey, Provider, SeedMaterial, TokenCounter,
};

pub const BOOTSTRAP_RUN: &str = "optimize:bootstrap";
pub const TRIAL_RUN: &str = "optimize:trial";
pub const SELECT_RUN: &str = "optimize:select";

pub const DEFAULT_TEMPERATURES: [f64; 4] = [0.0, 0.2, 0.4, 0.6];
pub const DEFAULT_MAX_DEMOS: usize = 8;
pub const DEFAULT_TRIALS: u32 = 16;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("no candidate configurations to select from")]
    EmptySet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// One labelled sample of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub input: String,
    pub ground_truth: String,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        input: impl Into<String>,
        ground_truth: impl Into<String>,
    ) -> Self {
        Example {
            id: id.into(),
            input: input.into(),
            ground_truth: ground_truth.into(),
        }
    }
}

/// Accepts or rejects a prediction. Must be deterministic.
pub trait TaskMetric: Send + Sync {
    fn accept(&self, prediction: &str, ground_truth: &str, trace: &str) -> bool;
}

impl<F: Fn(&str, &str, &str) -> bool + Send + Sync> TaskMetric for F {
    fn accept(&self, prediction: &str, ground_truth: &str, trace: &str) -> bool {
        self(prediction, ground_truth, trace)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl TaskMetric for ExactMatch {
    fn accept(&self, prediction: &str, ground_truth: &str, _trace: &str) -> bool {
        prediction == ground_truth
    }
}

/// A captured successful run, usable as a few-shot example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub source_id: String,
    pub input: String,
    pub trace: String,
    pub output: String,
    pub token_count: u64,
}

impl Demo {
    pub fn render_parts(input: &str, trace: &str, output: &str) -> String {
        format!("Input: {input}\nTrace: {trace}\nOutput: {output}\n")
    }

    pub fn render(&self) -> String {
        Self::render_parts(&self.input, &self.trace, &self.output)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoPool {
    pub demos: Vec<Demo>,
}

impl DemoPool {
    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    /// Training sample ids the demos came from.
    pub fn provenance(&self) -> Vec<&str> {
        self.demos.iter().map(|d| d.source_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub module_temperatures: Vec<f64>,
    pub demo_indices: Vec<usize>,
    pub include_formatting: bool,
}

impl AgentConfig {
    /// All modules at temperature zero, no demos, no formatting text.
    pub fn baseline(n_modules: usize) -> Self {
        AgentConfig {
            module_temperatures: vec![0.0; n_modules],
            demo_indices: Vec::new(),
            include_formatting: false,
        }
    }

    pub fn validate(&self, space: &SearchSpace, pool_len: usize) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidConfig(m));
        if self.module_temperatures.len() != space.n_modules {
            return bad(format!("expected {} module temperatures", space.n_modules));
        }
        if let Some(t) = self
            .module_temperatures
            .iter()
            .find(|t| !space.temperatures.contains(t))
        {
            return bad(format!("temperature {t} not in the candidate set"));
        }
        if self.demo_indices.len() > space.max_demos {
            return bad(format!("more than {} demos", space.max_demos));
        }
        if self.demo_indices.iter().any(|&i| i >= pool_len) {
            return bad("demo index out of range".into());
        }
        if self.demo_indices.iter().collect::<BTreeSet<_>>().len() != self.demo_indices.len() {
            return bad("duplicate demo index".into());
        }
        Ok(())
    }

    /// Demo tokens plus formatting tokens, the optimizer's cost objective.
    pub fn prompt_tokens(&self, pool: &DemoPool, formatting_tokens: u64) -> u64 {
        let demos: u64 = self
            .demo_indices
            .iter()
            .map(|&i| pool.demos[i].token_count)
            .sum();
        demos
            + if self.include_formatting {
                formatting_tokens
            } else {
                0
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_modules: usize,
    pub temperatures: Vec<f64>,
    pub max_demos: usize,
    pub formatting_tokens: u64,
}

impl SearchSpace {
    pub fn new(n_modules: usize, formatting_tokens: u64) -> Self {
        SearchSpace {
            n_modules,
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            max_demos: DEFAULT_MAX_DEMOS,
            formatting_tokens,
        }
    }
}

/// Proposes the configuration of trial `trial_index`.
pub trait ConfigSampler: Send + Sync {
    fn sample(
        &self,
        space: &SearchSpace,
        pool_len: usize,
        seed: u64,
        trial_index: u32,
    ) -> AgentConfig;
}

/// Uniform sampling: each temperature uniform over the candidate set, a demo
/// count uniform in `0..=min(max_demos, pool)`, then a uniform subset of that size.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSampler;

impl ConfigSampler for RandomSampler {
    fn sample(
        &self,
        space: &SearchSpace,
        pool_len: usize,
        seed: u64,
        trial_index: u32,
    ) -> AgentConfig {
        let key =
            DrawKey::from_fields(&[b"sampler", &seed.to_le_bytes(), &trial_index.to_le_bytes()]);
        let mut counter = 0u64;
        let mut next = |n: u64| {
            counter += 1;
            key.below(counter, n)
        };
        let module_temperatures = (0..space.n_modules)
            .map(|_| space.temperatures[next(space.temperatures.len() as u64) as usize])
            .collect();
        let k = next(space.max_demos.min(pool_len) as u64 + 1) as usize;
        let mut indices: Vec<usize> = (0..pool_len).collect();
        for i in 0..k {
            let j = i + next((pool_len - i) as u64) as usize;
            indices.swap(i, j);
        }
        let mut demo_indices = indices[..k].to_vec();
        demo_indices.sort_unstable();
        AgentConfig {
            module_temperatures,
            demo_indices,
            include_formatting: next(2) == 1,
        }
    }
}

/// Output of one program invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOutput {
    pub prediction: String,
    pub trace: String,
    pub calls: Vec<CallRecord>,
    pub error: Option<String>,
}

/// The agent under optimization.
pub trait Program: Send + Sync {
    fn n_modules(&self) -> usize;

    /// Model calls go through `provider`, one per module.
    fn run(
        &self,
        example: &Example,
        config: &AgentConfig,
        pool: &DemoPool,
        run_seed: u64,
        provider: &dyn Provider,
    ) -> ProgramOutput;
}

/// A simulated multi-module agent.
///
/// Each module makes one provider call whose prompt holds the formatting
/// text, the selected demos and the input, so token usage follows the
/// configuration. Correctness is one uniform draw per example, shared by
/// all configurations, compared with
/// `base_skill + Σ demo quality + formatting_bonus − temperature_penalty · mean temperature`;
/// a demo's quality is `demo_lift · (0.5 + u)` with `u` drawn from its source id.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPipeline {
    pub model: String,
    pub modules: usize,
    pub base_skill: f64,
    pub demo_lift: f64,
    pub formatting_bonus: f64,
    pub temperature_penalty: f64,
    pub formatting_text: String,
    pub correctness_seed: u64,
}

impl SimPipeline {
    pub fn new(model: impl Into<String>, modules: usize) -> Self {
        SimPipeline {
            model: model.into(),
            modules,
            base_skill: 0.4,
            demo_lift: 0.05,
            formatting_bonus: 0.05,
            temperature_penalty: 0.1,
            formatting_text: "Answer with the final result only, on a single line.".into(),
            correctness_seed: 0,
        }
    }

    pub fn demo_quality(&self, demo: &Demo) -> f64 {
        let u = DrawKey::from_fields(&[b"demo-quality", demo.source_id.as_bytes()]).uniform(0);
        self.demo_lift * (0.5 + u)
    }

    pub fn pass_probability(&self, config: &AgentConfig, pool: &DemoPool) -> f64 {
        let demos: f64 = config
            .demo_indices
            .iter()
            .map(|&i| self.demo_quality(&pool.demos[i]))
            .sum();
        let mean_t = if config.module_temperatures.is_empty() {
            0.0
        } else {
            config.module_temperatures.iter().sum::<f64>() / config.module_temperatures.len() as f64
        };
        let fmt = if config.include_formatting {
            self.formatting_bonus
        } else {
            0.0
        };
        (self.base_skill + demos + fmt - self.temperature_penalty * mean_t).clamp(0.0, 1.0)
    }

    pub fn correctness_draw(&self, example_id: &str) -> f64 {
        DrawKey::from_fields(&[
            b"pipeline",
            &self.correctness_seed.to_le_bytes(),
            example_id.as_bytes(),
        ])
        .uniform(0)
    }

    fn prompt(
        &self,
        module: usize,
        example: &Example,
        config: &AgentConfig,
        pool: &DemoPool,
    ) -> String {
        let mut p = String::new();
        if config.include_formatting {
            p.push_str(&self.formatting_text);
            p.push('\n');
        }
        for &i in &config.demo_indices {
            p.push_str(&pool.demos[i].render());
        }
        p.push_str(&format!("Module {module}: {}", example.input));
        p
    }
}

impl Program for SimPipeline {
    fn n_modules(&self) -> usize {
        self.modules
    }

    fn run(
        &self,
        example: &Example,
        config: &AgentConfig,
        pool: &DemoPool,
        run_seed: u64,
        provider: &dyn Provider,
    ) -> ProgramOutput {
        let mut calls = Vec::with_capacity(self.modules);
        let mut trace = Vec::with_capacity(self.modules);
        for (m, &t) in config.module_temperatures.iter().enumerate() {
            let seed = SeedMaterial::new(run_seed, example.id.clone(), m as u32);
            let outcome = CompletionRequest::new(
                self.model.clone(),
                self.prompt(m, example, config, pool),
                t,
                256,
                seed,
            )
            .and_then(|r| provider.complete(&r));
            match outcome {
                Ok(resp) => {
                    let mut call = CallRecord::new(
                        self.model.clone(),
                        resp.usage,
                        t,
                        m as u32,
                        CallPurpose::Generate,
                    );
                    call.latency_ms = resp.latency_ms;
                    call.provider_attempts = resp.attempts;
                    calls.push(call);
                    trace.push(format!("m{m}:{}", resp.usage.output_tokens));
                }
                Err(e) => {
                    let mut call = CallRecord::new(
                        self.model.clone(),
                        TokenUsage::ZERO,
                        t,
                        m as u32,
                        CallPurpose::Generate,
                    );
                    call.error = Some(e.annotation().into());
                    call.provider_attempts = e.attempts();
                    calls.push(call);
                    return ProgramOutput {
                        prediction: String::new(),
                        trace: trace.join(" "),
                        calls,
                        error: Some(e.annotation().into()),
                    };
                }
            }
        }
        let pass = self.correctness_draw(&example.id) < self.pass_probability(config, pool);
        let prediction = if pass {
            example.ground_truth.clone()
        } else {
            format!("wrong:{}", example.id)
        };
        ProgramOutput {
            prediction,
            trace: trace.join(" "),
            calls,
            error: None,
        }
    }
}

/// Result of evaluating one sampled configuration on the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: u32,
    pub config: AgentConfig,
    pub val_accuracy: f64,
    pub val_correct: u64,
    pub val_total: u64,
    pub prompt_tokens: u64,
}

impl TrialResult {
    pub fn accuracy_exact(&self) -> BigRational {
        BigRational::new(self.val_correct.into(), self.val_total.max(1).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objectives {
    /// When false, only validation accuracy is maximized.
    pub minimize_tokens: bool,
}

impl Default for Objectives {
    fn default() -> Self {
        Objectives {
            minimize_tokens: true,
        }
    }
}

/// Indices of the trials no other trial dominates under `objectives`.
pub fn pareto_trials(trials: &[TrialResult], objectives: Objectives) -> Vec<usize> {
    let keys: Vec<(u64, BigRational)> = trials
        .iter()
        .map(|t| {
            (
                if objectives.minimize_tokens {
                    t.prompt_tokens
                } else {
                    0
                },
                t.accuracy_exact(),
            )
        })
        .collect();
    let mut idx = non_dominated_indices(&keys);
    idx.sort_by_key(|&i| (trials[i].prompt_tokens, trials[i].trial_index));
    idx
}

/// Shared inputs of every optimization phase.
pub struct Optimizer<'a> {
    pub program: &'a dyn Program,
    pub metric: &'a dyn TaskMetric,
    pub provider: &'a dyn Provider,
    pub tokens: TokenCounter,
    /// Model whose tokenizer counts demo tokens.
    pub token_model: String,
    pub space: SearchSpace,
    pub seed: u64,
}

impl fmt::Debug for Optimizer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Optimizer")
            .field("space", &self.space)
            .field("seed", &self.seed)
            .finish()
    }
}

fn phase_seed(seed: u64, phase: &str, index: u32) -> u64 {
    derive_seed(&[&seed.to_le_bytes(), phase.as_bytes(), &index.to_le_bytes()])
}

impl<'a> Optimizer<'a> {
    pub fn new(
        program: &'a dyn Program,
        metric: &'a dyn TaskMetric,
        provider: &'a dyn Provider,
        seed: u64,
    ) -> Self {
        let space = SearchSpace::new(program.n_modules(), 0);
        Optimizer {
            program,
            metric,
            provider,
            tokens: TokenCounter::new(),
            token_model: String::new(),
            space,
            seed,
        }
    }

    pub fn with_space(mut self, space: SearchSpace) -> Self {
        self.space = space;
        self
    }

    fn evaluate(
        &self,
        example: &Example,
        config: &AgentConfig,
        pool: &DemoPool,
        run_seed: u64,
    ) -> (TaskResult, ProgramOutput) {
        let out = self
            .program
            .run(example, config, pool, run_seed, self.provider);
        let pass = out.error.is_none()
            && self
                .metric
                .accept(&out.prediction, &example.ground_truth, &out.trace);
        let mut result = TaskResult::new(example.id.clone(), pass, pass, out.calls.clone());
        result.error = out.error.clone();
        (result, out)
    }

    /// Runs the baseline configuration over `train` and keeps every metric-passing trace.
    pub fn bootstrap_demos(
        &self,
        train: &[Example],
    ) -> Result<(DemoPool, RunRecord), OptimizerError> {
        if train.is_empty() {
            return Err(OptimizerError::EmptySplit("train"));
        }
        let seed = phase_seed(self.seed, BOOTSTRAP_RUN, 0);
        let baseline = AgentConfig::baseline(self.space.n_modules);
        let empty = DemoPool::default();
        let mut pool = DemoPool::default();
        let mut results = Vec::with_capacity(train.len());
        for ex in train {
            let (result, out) = self.evaluate(ex, &baseline, &empty, seed);
            if result.success {
                let text = Demo::render_parts(&ex.input, &out.trace, &out.prediction);
                pool.demos.push(Demo {
                    source_id: ex.id.clone(),
                    input: ex.input.clone(),
                    trace: out.trace,
                    output: out.prediction,
                    token_count: self.tokens.count(&text, &self.token_model),
                });
            }
            results.push(result);
        }
        Ok((pool, RunRecord::new(BOOTSTRAP_RUN, 0, seed, results)?))
    }

    /// Evaluates one configuration on a split.
    pub fn run_trial(
        &self,
        trial_index: u32,
        config: AgentConfig,
        pool: &DemoPool,
        val: &[Example],
    ) -> Result<(TrialResult, RunRecord), OptimizerError> {
        config.validate(&self.space, pool.len())?;
        let seed = phase_seed(self.seed, TRIAL_RUN, trial_index);
        let results: Vec<TaskResult> = val
            .iter()
            .map(|ex| self.evaluate(ex, &config, pool, seed).0)
            .collect();
        let correct = results.iter().filter(|r| r.success).count() as u64;
        let trial = TrialResult {
            trial_index,
            prompt_tokens: config.prompt_tokens(pool, self.space.formatting_tokens),
            config,
            val_accuracy: correct as f64 / val.len() as f64,
            val_correct: correct,
            val_total: val.len() as u64,
        };
        Ok((
            trial,
            RunRecord::new(TRIAL_RUN, trial_index, seed, results)?,
        ))
    }

    /// Samples and evaluates `n_trials` configurations; returns every trial and its run.
    pub fn search(
        &self,
        pool: &DemoPool,
        val: &[Example],
        n_trials: u32,
        sampler: &dyn ConfigSampler,
    ) -> Result<Vec<(TrialResult, RunRecord)>, OptimizerError> {
        if n_trials == 0 {
            return Err(OptimizerError::NoTrials);
        }
        if val.is_empty() {
            return Err(OptimizerError::EmptySplit("validation"));
        }
        (0..n_trials)
            .map(|t| {
                self.run_trial(
                    t,
                    sampler.sample(&self.space, pool.len(), self.seed, t),
                    pool,
                    val,
                )
            })
            .collect()
    }

    /// The non-dominated trials of [`Optimizer::search`], cheapest first.
    pub fn joint_optimize(
        &self,
        pool: &DemoPool,
        val: &[Example],
        n_trials: u32,
        sampler: &dyn ConfigSampler,
        objectives: Objectives,
    ) -> Result<Vec<TrialResult>, OptimizerError> {
        let trials: Vec<TrialResult> = self
            .search(pool, val, n_trials, sampler)?
            .into_iter()
            .map(|t| t.0)
            .collect();
        Ok(pareto_trials(&trials, objectives)
            .into_iter()
            .map(|i| trials[i].clone())
            .collect())
    }

    /// Re-evaluates each candidate on `dev` and picks the most accurate.
    pub fn select_deployment(
        &self,
        candidates: &[TrialResult],
        pool: &DemoPool,
        dev: &[Example],
    ) -> Result<(Selection, Vec<RunRecord>), OptimizerError> {
        if candidates.is_empty() {
            return Err(OptimizerError::EmptySet);
        }
        if dev.is_empty() {
            return Err(OptimizerError::EmptySplit("development"));
        }
        let mut scored = Vec::with_capacity(candidates.len());
        let mut runs = Vec::with_capacity(candidates.len());
        for (pos, c) in candidates.iter().enumerate() {
            let seed = phase_seed(self.seed, SELECT_RUN, c.trial_index);
            let results: Vec<TaskResult> = dev
                .iter()
                .map(|ex| self.evaluate(ex, &c.config, pool, seed).0)
                .collect();
            let correct = results.iter().filter(|r| r.success).count() as u64;
            scored.push((c.clone(), correct, dev.len() as u64));
            runs.push(RunRecord::new(SELECT_RUN, pos as u32, seed, results)?);
        }
        let best = pick_deployment(&scored).expect("non-empty");
        let (trial, correct, total) = scored.swap_remove(best);
        Ok((
            Selection {
                dev_accuracy: correct as f64 / total as f64,
                dev_correct: correct,
                dev_total: total,
                trial,
            },
            runs,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub trial: TrialResult,
    pub dev_accuracy: f64,
    pub dev_correct: u64,
    pub dev_total: u64,
}

/// Index of the candidate with the highest dev accuracy; ties go to fewer
/// prompt tokens, then the lower trial index.
pub fn pick_deployment(scored: &[(TrialResult, u64, u64)]) -> Option<usize> {
    let acc = |i: usize| BigRational::new(scored[i].1.into(), scored[i].2.max(1).into());
    (0..scored.len()).min_by(|&a, &b| {
        acc(b)
            .cmp(&acc(a))
            .then(scored[a].0.prompt_tokens.cmp(&scored[b].0.prompt_tokens))
            .then(scored[a].0.trial_index.cmp(&scored[b].0.trial_index))
    })
}

/// Everything produced by a full optimization.
#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub pool: DemoPool,
    pub trials: Vec<TrialResult>,
    pub pareto: Vec<TrialResult>,
    pub selection: Selection,
    pub ledger: EvalLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<'s> {
    pub train: &'s [Example],
    pub val: &'s [Example],
    pub dev: &'s [Example],
}

/// Bootstrap, search and selection in sequence.
pub fn optimize(
    optimizer: &Optimizer<'_>,
    splits: Splits<'_>,
    n_trials: u32,
    sampler: &dyn ConfigSampler,
    objectives: Objectives,
    benchmark_id: &str,
) -> Result<OptimizationOutcome, OptimizerError> {
    let (pool, boot) = optimizer.bootstrap_demos(splits.train)?;
    let mut ledger = EvalLedger::new(benchmark_id).append_run(boot)?;
    let mut trials = Vec::new();
    for (trial, run) in optimizer.search(&pool, splits.val, n_trials, sampler)? {
        ledger = ledger.append_run(run)?;
        trials.push(trial);
    }
    let pareto: Vec<TrialResult> = pareto_trials(&trials, objectives)
        .into_iter()
        .map(|i| trials[i].clone())
        .collect();
    let (selection, runs) = optimizer.select_deployment(&pareto, &pool, splits.dev)?;
    for run in runs {
        ledger = ledger.append_run(run)?;
    }
    Ok(OptimizationOutcome {
        pool,
        trials,
        pareto,
        selection,
        ledger,
    })
}

/// Fixed cost = every call in `optimization`; variable = mean per-task cost of `deployment`.
pub fn config_cost_breakdown(
    optimization: &EvalLedger,
    deployment: &EvalLedger,
    sheet: &PriceSheet,
) -> Result<CostBreakdown, OptimizerError> {
    let currency = sheet.currency().clone();
    let fixed_parts = reprice(optimization, sheet)?;
    let fixed = Money::sum(&currency, fixed_parts.values())?;
    let deployed = reprice(deployment, sheet)?;
    let total = Money::sum(&currency, deployed.values())?;
    let tasks: u64 = deployment
        .runs()
        .iter()
        .map(|r| r.results.len() as u64)
        .sum();
    let variable = if tasks == 0 {
        Money::zero(currency)
    } else {
        total.div_count(tasks)?
    };
    Ok(CostBreakdown::new(fixed, variable, tasks)?)
}

/// JSON-friendly report of an optimization.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizationReport<'o> {
    pub pool_size: usize,
    pub pool_provenance: Vec<&'o str>,
    pub pareto: &'o [TrialResult],
    pub deployment: &'o Selection,
    pub total_calls: usize,
    pub calls_by_phase: BTreeMap<String, usize>,
}

impl OptimizationOutcome {
    pub fn report(&self) -> OptimizationReport<'_> {
        let mut calls_by_phase = BTreeMap::new();
        for run in self.ledger.runs() {
            *calls_by_phase.entry(run.strategy_id.clone()).or_insert(0) +=
                run.results.iter().map(|r| r.calls.len()).sum::<usize>();
        }
        OptimizationReport {
            pool_size: self.pool.len(),
            pool_provenance: self.pool.provenance(),
            pareto: &self.pareto,
            deployment: &self.selection,
            total_calls: self.ledger.total_calls(),
            calls_by_phase,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::PriceSheet;
    use crate::provider::{SimModelSpec, SimProvider, SimTaskSpec};
    use rust_decimal::Decimal;
    use std::str::FromStr;

    fn examples(prefix: &str, n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| {
                Example::new(
                    format!("{prefix}{i}"),
                    format!("question {prefix}{i}"),
                    format!("a{i}"),
                )
            })
            .collect()
    }

    fn provider(all: &[&[Example]]) -> SimProvider {
        let tasks = all
            .iter()
            .flat_map(|s| s.iter())
            .map(|e| SimTaskSpec::new(e.id.clone(), 0.5, 20));
        SimProvider::new(
            [SimModelSpec {
                output_tokens_mean: 30,
                ..SimModelSpec::new("m", 0.5)
            }],
            tasks,
        )
        .unwrap()
    }

    fn trial(idx: u32, correct: u64, tokens: u64) -> TrialResult {
        TrialResult {
            trial_index: idx,
            config: AgentConfig::baseline(1),
            val_accuracy: correct as f64 / 10.0,
            val_correct: correct,
            val_total: 10,
            prompt_tokens: tokens,
        }
    }

    #[test]
    fn sampler_respects_space_and_is_deterministic() {
        let space = SearchSpace::new(3, 12);
        for t in 0..200 {
            let c = RandomSampler.sample(&space, 20, 7, t);
            c.validate(&space, 20).unwrap();
            assert_eq!(c, RandomSampler.sample(&space, 20, 7, t));
        }
        let c = RandomSampler.sample(&space, 0, 7, 0);
        assert!(c.demo_indices.is_empty());
        let sizes: BTreeSet<usize> = (0..400)
            .map(|t| RandomSampler.sample(&space, 20, 1, t).demo_indices.len())
            .collect();
        assert_eq!(sizes, (0..=8).collect());
    }

    #[test]
    fn config_validation() {
        let space = SearchSpace::new(1, 0);
        let mut c = AgentConfig::baseline(1);
        assert!(c.validate(&space, 0).is_ok());
        c.module_temperatures = vec![0.3];
        assert!(c.validate(&space, 0).is_err());
        let c = AgentConfig {
            demo_indices: vec![1, 1],
            ..AgentConfig::baseline(1)
        };
        assert!(c.validate(&space, 5).is_err());
        let c = AgentConfig {
            demo_indices: (0..9).collect(),
            ..AgentConfig::baseline(1)
        };
        assert!(c.validate(&space, 20).is_err());
        assert!(AgentConfig::baseline(2).validate(&space, 0).is_err());
    }

    #[test]
    fn prompt_tokens_formula() {
        let pool = DemoPool {
            demos: (0..3)
                .map(|i| Demo {
                    source_id: format!("s{i}"),
                    input: String::new(),
                    trace: String::new(),
                    output: String::new(),
                    token_count: 10 * (i + 1),
                })
                .collect(),
        };
        let c = AgentConfig {
            demo_indices: vec![0, 2],
            include_formatting: true,
            ..AgentConfig::baseline(1)
        };
        assert_eq!(c.prompt_tokens(&pool, 7), 10 + 30 + 7);
        let c = AgentConfig {
            include_formatting: false,
            ..c
        };
        assert_eq!(c.prompt_tokens(&pool, 7), 40);
    }

    #[test]
    fn bootstrap_empty_when_metric_rejects_everything() {
        let train = examples("tr", 10);
        let p = provider(&[&train]);
        let prog = SimPipeline::new("m", 2);
        let reject = |_: &str, _: &str, _: &str| false;
        let opt = Optimizer::new(&prog, &reject, &p, 1);
        let (pool, run) = opt.bootstrap_demos(&train).unwrap();
        assert!(pool.is_empty());
        assert_eq!(run.results.len(), 10);
    }

    #[test]
    fn bootstrap_keeps_everything_for_a_perfect_agent() {
        let train = examples("tr", 50);
        let p = provider(&[&train]);
        let prog = SimPipeline {
            base_skill: 1.0,
            ..SimPipeline::new("m", 1)
        };
        let opt = Optimizer::new(&prog, &ExactMatch, &p, 1);
        let (pool, _) = opt.bootstrap_demos(&train).unwrap();
        assert_eq!(pool.len(), 50);
        assert_eq!(
            pool.provenance(),
            train.iter().map(|e| e.id.as_str()).collect::<Vec<_>>()
        );
        for d in &pool.demos {
            assert_eq!(
                d.token_count,
                crate::provider::count_tokens(&d.render(), "m")
            );
        }
    }

    #[test]
    fn bootstrap_count_matches_enumerated_draws() {
        let train = examples("tr", 50);
        let p = provider(&[&train]);
        let prog = SimPipeline {
            base_skill: 0.5,
            ..SimPipeline::new("m", 1)
        };
        let expected = train
            .iter()
            .filter(|e| prog.correctness_draw(&e.id) < 0.5)
            .count();
        let opt = Optimizer::new(&prog, &ExactMatch, &p, 1);
        assert_eq!(opt.bootstrap_demos(&train).unwrap().0.len(), expected);
        assert!(expected > 10 && expected < 40);
    }

    #[test]
    fn single_trial_is_its_own_frontier() {
        let (train, val) = (examples("tr", 10), examples("va", 10));
        let p = provider(&[&train, &val]);
        let prog = SimPipeline::new("m", 1);
        let opt = Optimizer::new(&prog, &ExactMatch, &p, 3);
        let (pool, _) = opt.bootstrap_demos(&train).unwrap();
        let r = opt
            .joint_optimize(&pool, &val, 1, &RandomSampler, Objectives::default())
            .unwrap();
        assert_eq!(r.len(), 1);
        assert!(matches!(
            opt.joint_optimize(&pool, &val, 0, &RandomSampler, Objectives::default()),
            Err(OptimizerError::NoTrials)
        ));
    }

    #[test]
    fn equal_accuracy_keeps_cheaper_trial() {
        let trials = [trial(0, 5, 100), trial(1, 5, 60)];
        assert_eq!(pareto_trials(&trials, Objectives::default()), [1]);
        let trials = [trial(0, 5, 100), trial(1, 6, 60), trial(2, 7, 80)];
        assert_eq!(pareto_trials(&trials, Objectives::default()), [1, 2]);
        assert_eq!(
            pareto_trials(
                &trials,
                Objectives {
                    minimize_tokens: false
                }
            ),
            [2]
        );
    }

    #[test]
    fn deployment_tie_breaks() {
        assert_eq!(pick_deployment(&[(trial(0, 0, 10), 1, 1)]), Some(0));
        assert_eq!(
            pick_deployment(&[(trial(0, 0, 10), 50, 100), (trial(1, 0, 90), 51, 100)]),
            Some(1)
        );
        assert_eq!(
            pick_deployment(&[(trial(0, 0, 120), 50, 100), (trial(1, 0, 80), 50, 100)]),
            Some(1)
        );
        assert_eq!(
            pick_deployment(&[(trial(4, 0, 80), 1, 2), (trial(3, 0, 80), 50, 100)]),
            Some(1)
        );
        assert_eq!(pick_deployment(&[]), None);
    }

    #[test]
    fn full_optimization_ledger_accounts_for_every_call() {
        let (train, val, dev) = (examples("tr", 20), examples("va", 15), examples("de", 10));
        let p = provider(&[&train, &val, &dev]);
        let prog = SimPipeline::new("m", 2);
        let opt = Optimizer::new(&prog, &ExactMatch, &p, 11).with_space(SearchSpace::new(2, 9));
        let splits = Splits {
            train: &train,
            val: &val,
            dev: &dev,
        };
        let out = optimize(
            &opt,
            splits.clone(),
            6,
            &RandomSampler,
            Objectives::default(),
            "qa",
        )
        .unwrap();
        let report = out.report();
        assert_eq!(report.calls_by_phase[BOOTSTRAP_RUN], 20 * 2);
        assert_eq!(report.calls_by_phase[TRIAL_RUN], 6 * 15 * 2);
        assert_eq!(report.calls_by_phase[SELECT_RUN], out.pareto.len() * 10 * 2);
        let again = optimize(&opt, splits, 6, &RandomSampler, Objectives::default(), "qa").unwrap();
        assert_eq!(again.pareto, out.pareto);
        assert_eq!(again.ledger, out.ledger);
    }

    fn sheet() -> PriceSheet {
        PriceSheet::openai_april_2024()
    }

    fn ledger_with(strategy: &str, model: &str, per_task: &[TokenUsage]) -> EvalLedger {
        let results = per_task
            .iter()
            .enumerate()
            .map(|(i, u)| {
                TaskResult::new(
                    format!("t{i}"),
                    true,
                    true,
                    vec![CallRecord::new(model, *u, 0.0, 0, CallPurpose::Generate)],
                )
            })
            .collect();
        EvalLedger::new("b")
            .append_run(RunRecord::new(strategy, 0, 0, results).unwrap())
            .unwrap()
    }

    #[test]
    fn breakdown_of_uncompiled_baseline_has_no_fixed_cost() {
        let deploy = ledger_with(
            "zero_shot",
            "gpt-3.5-turbo-0125",
            &[TokenUsage::new(1000, 0); 4],
        );
        let b = config_cost_breakdown(&EvalLedger::new("b"), &deploy, &sheet()).unwrap();
        assert!(b.fixed.is_zero());
        assert_eq!(
            b.variable_per_task.amount(),
            Decimal::from_str("0.0005").unwrap()
        );
    }

    #[test]
    fn breakdown_hand_sum() {
        // $0.01 per optimization call = 20,000 input tokens at $0.5 per million.
        let opt = ledger_with(
            "optimize:trial",
            "gpt-3.5-turbo-0125",
            &[TokenUsage::new(20_000, 0); 10],
        );
        // $0.002 per deployed task = 4,000 input tokens.
        let deploy = ledger_with(
            "deployed",
            "gpt-3.5-turbo-0125",
            &[TokenUsage::new(4_000, 0); 7],
        );
        let b = config_cost_breakdown(&opt, &deploy, &sheet()).unwrap();
        assert_eq!(b.fixed.amount(), Decimal::from_str("0.1").unwrap());
        assert_eq!(
            b.variable_per_task.amount(),
            Decimal::from_str("0.002").unwrap()
        );
        assert_eq!(b.tasks_assumed, 7);
    }

    #[test]
    fn breakdown_reproduces_joint_optimization_row() {
        // Fixed $2.714 and $0.174 per 100 inferences under GPT-3.5 input pricing.
        let opt = ledger_with(
            "optimize:trial",
            "gpt-3.5-turbo-0125",
            &[TokenUsage::new(5_428_000, 0)],
        );
        let deploy = ledger_with(
            "deployed",
            "gpt-3.5-turbo-0125",
            &[TokenUsage::new(3_480, 0); 100],
        );
        let b = config_cost_breakdown(&opt, &deploy, &sheet()).unwrap();
        assert_eq!(b.fixed.to_fixed(), "2.714000");
        assert_eq!(
            b.total(100)
                .unwrap()
                .checked_sub(&b.fixed)
                .unwrap()
                .to_fixed(),
            "0.174000"
        );
    }
}
