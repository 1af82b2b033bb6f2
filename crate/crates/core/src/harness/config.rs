//! Evaluation configs and the repeated-run driver.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::{BenchmarkManifest, TaskEntry};
use super::HarnessError;
use crate::ledger::{EvalLedger, RunRecord, TaskResult};
use crate::optimizer::{
    optimize, ExactMatch, Example, Objectives, OptimizationOutcome, Optimizer, RandomSampler,
    SearchSpace, SimPipeline, Splits, DEFAULT_MAX_DEMOS, DEFAULT_TEMPERATURES, DEFAULT_TRIALS,
};
use crate::pricing::PriceSheet;
use crate::provider::{
    default_token_count, derive_seed, DrawKey, Provider, RateLimit, SimModelSpec, SimProvider,
};
use crate::strategies::{run_task, StrategySpec, Task, Verifiers};

#[cfg(feature = "http")]
use crate::provider::{EndpointConfig, HttpProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimProviderConfig {
    pub models: Vec<SimModelSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rate_limits: BTreeMap<String, RateLimit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Sim(SimProviderConfig),
    #[cfg(feature = "http")]
    Http(EndpointConfig),
}

impl ProviderConfig {
    pub fn knows_model(&self, model: &str) -> bool {
        match self {
            ProviderConfig::Sim(s) => s.models.iter().any(|m| m.model == model),
            #[cfg(feature = "http")]
            ProviderConfig::Http(e) => e.models.contains_key(model),
        }
    }

    /// A fresh provider; rate-limit buckets start full.
    pub fn build(&self, manifest: &BenchmarkManifest) -> Result<Arc<dyn Provider>, HarnessError> {
        match self {
            ProviderConfig::Sim(s) => {
                let mut p = SimProvider::new(s.models.iter().cloned(), manifest.sim_tasks())
                    .map_err(|e| HarnessError::Config(format!("simulated provider: {e}")))?;
                for (model, limit) in &s.rate_limits {
                    p = p.with_rate_limit(model.clone(), *limit);
                }
                Ok(Arc::new(p))
            }
            #[cfg(feature = "http")]
            ProviderConfig::Http(e) => Ok(Arc::new(HttpProvider::new(e.clone()))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrderPolicy {
    #[default]
    Given,
    ShuffledPerRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub dev: usize,
}

impl SplitSizes {
    /// Half for training, a quarter for validation, the rest for selection.
    pub fn default_for(n: usize) -> Self {
        let train = n / 2;
        let val = n / 4;
        SplitSizes {
            train,
            val,
            dev: n - train - val,
        }
    }
}

/// Optimizer block of an eval config. The agent under optimization is the
/// simulated multi-module pipeline calling `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub model: String,
    #[serde(default = "default_modules")]
    pub modules: usize,
    #[serde(default = "default_trials")]
    pub n_trials: u32,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_max_demos")]
    pub max_demos: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitSizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub minimize_tokens: bool,
}

fn default_modules() -> usize {
    2
}
fn default_trials() -> u32 {
    DEFAULT_TRIALS
}
fn default_temperatures() -> Vec<f64> {
    DEFAULT_TEMPERATURES.to_vec()
}
fn default_max_demos() -> usize {
    DEFAULT_MAX_DEMOS
}
fn yes() -> bool {
    true
}
fn default_repetitions() -> u32 {
    5
}
fn default_parallelism() -> usize {
    1
}

impl OptimizerSettings {
    pub fn new(model: impl Into<String>) -> Self {
        OptimizerSettings {
            model: model.into(),
            modules: default_modules(),
            n_trials: default_trials(),
            temperatures: default_temperatures(),
            max_demos: default_max_demos(),
            splits: None,
            seed: None,
            minimize_tokens: true,
        }
    }
}

/// A fully resolved evaluation config.
///
/// In a config file, `manifest`, `price_sheet` and `provider` may each be
/// given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub manifest: BenchmarkManifest,
    pub strategies: Vec<StrategySpec>,
    pub repetitions: u32,
    pub base_seed: u64,
    pub price_sheet: PriceSheet,
    pub provider: ProviderConfig,
    pub task_order: TaskOrderPolicy,
    /// Tasks of one run executed concurrently.
    pub parallelism: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSettings>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    manifest: Value,
    strategies: Vec<StrategySpec>,
    #[serde(default = "default_repetitions")]
    repetitions: u32,
    #[serde(default)]
    base_seed: u64,
    price_sheet: Value,
    provider: Value,
    #[serde(default)]
    task_order: TaskOrderPolicy,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(default)]
    optimizer: Option<OptimizerSettings>,
}

fn resolve<T: DeserializeOwned>(v: Value, base: &Path, what: &str) -> Result<T, HarnessError> {
    match v {
        Value::String(rel) => {
            let path: PathBuf = base.join(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| HarnessError::Config(format!("{what} {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{what} {}: {e}", path.display())))
        }
        other => {
            serde_json::from_value(other).map_err(|e| HarnessError::Config(format!("{what}: {e}")))
        }
    }
}

impl EvalConfig {
    pub fn new(
        manifest: BenchmarkManifest,
        strategies: Vec<StrategySpec>,
        price_sheet: PriceSheet,
        provider: ProviderConfig,
    ) -> Self {
        EvalConfig {
            manifest,
            strategies,
            repetitions: default_repetitions(),
            base_seed: 0,
            price_sheet,
            provider,
            task_order: TaskOrderPolicy::Given,
            parallelism: 1,
            optimizer: None,
        }
    }

    /// Parses a config; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let raw: ConfigFile =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let manifest: BenchmarkManifest = resolve(raw.manifest, base_dir, "manifest")?;
        manifest
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let config = EvalConfig {
            manifest,
            strategies: raw.strategies,
            repetitions: raw.repetitions,
            base_seed: raw.base_seed,
            price_sheet: resolve(raw.price_sheet, base_dir, "price sheet")?,
            provider: resolve(raw.provider, base_dir, "provider")?,
            task_order: raw.task_order,
            parallelism: raw.parallelism,
            optimizer: raw.optimizer,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| e.context(&path.display().to_string()))
    }

    /// Self-contained JSON with every reference inlined.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Pre-flight checks: unique strategy ids, every model known to the
    /// provider config and priced by the sheet.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| Err(HarnessError::Config(m));
        if self.repetitions == 0 {
            return cfg("repetitions must be at least 1".into());
        }
        if self.parallelism == 0 {
            return cfg("parallelism must be at least 1".into());
        }
        if self.strategies.is_empty() {
            return cfg("no strategies".into());
        }
        let mut ids = BTreeSet::new();
        let mut models = BTreeSet::new();
        for s in &self.strategies {
            s.validate(None)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if !ids.insert(s.id()) {
                return cfg(format!("strategy {} listed twice", s.id()));
            }
            models.extend(s.models());
        }
        if let Some(o) = &self.optimizer {
            if o.modules == 0 || o.n_trials == 0 || o.temperatures.is_empty() {
                return cfg("optimizer needs at least one module, trial and temperature".into());
            }
            models.insert(o.model.as_str());
        }
        let unknown: Vec<&str> = models
            .iter()
            .copied()
            .filter(|m| !self.provider.knows_model(m))
            .collect();
        if !unknown.is_empty() {
            return cfg(format!(
                "models not served by the provider: {}",
                unknown.join(", ")
            ));
        }
        let unpriced = self.price_sheet.missing_models(models.iter().copied());
        if !unpriced.is_empty() {
            return cfg(format!(
                "models missing from the price sheet: {}",
                unpriced.join(", ")
            ));
        }
        if matches!(self.provider, ProviderConfig::Sim(_)) {
            if let Some(t) = self
                .manifest
                .tasks
                .iter()
                .find(|t| matches!(t, TaskEntry::External(_)))
            {
                return cfg(format!("task {} has no simulation parameters", t.id()));
            }
        }
        Ok(())
    }
}

/// Seed of run `run_index` of `strategy_id`; other strategies never affect it.
pub fn run_seed(base_seed: u64, strategy_id: &str, run_index: u32) -> u64 {
    derive_seed(&[
        &base_seed.to_le_bytes(),
        strategy_id.as_bytes(),
        &run_index.to_le_bytes(),
    ])
}

/// Execution order of `n` tasks as indices into the manifest.
pub fn task_order(policy: TaskOrderPolicy, n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if policy == TaskOrderPolicy::ShuffledPerRun {
        let key = DrawKey::from_fields(&[b"task-order", &seed.to_le_bytes()]);
        for i in (1..n).rev() {
            let j = key.below(i as u64, i as u64 + 1) as usize;
            order.swap(i, j);
        }
    }
    order
}

struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    fn new(width: usize) -> Result<Self, HarnessError> {
        #[cfg(feature = "parallel")]
        {
            let pool = if width > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(width)
                        .build()
                        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Executor { pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = width;
            Ok(Executor {})
        }
    }

    fn run(
        &self,
        spec: &StrategySpec,
        tasks: &[&Task],
        seed: u64,
        provider: &dyn Provider,
        verifiers: &Verifiers,
    ) -> Vec<TaskResult> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                tasks
                    .par_iter()
                    .map(|t| run_task(spec, t, seed, provider, verifiers))
                    .collect()
            });
        }
        tasks
            .iter()
            .map(|t| run_task(spec, t, seed, provider, verifiers))
            .collect()
    }
}

/// Runs every strategy `repetitions` times with a provider built from the config.
pub fn run_eval(config: &EvalConfig) -> Result<EvalLedger, HarnessError> {
    config.validate()?;
    let provider = config.provider.build(&config.manifest)?;
    run_eval_with(config, provider.as_ref(), &mut |_| Ok(()))
}

/// Like [`run_eval`] against `provider`, handing each finished run to
/// `on_run` before it joins the ledger. Runs are produced strategy by
/// strategy, repetition by repetition.
pub fn run_eval_with(
    config: &EvalConfig,
    provider: &dyn Provider,
    on_run: &mut dyn FnMut(&RunRecord) -> Result<(), HarnessError>,
) -> Result<EvalLedger, HarnessError> {
    config.validate()?;
    let tasks = config.manifest.tasks();
    let verifiers = config.manifest.verifiers();
    let executor = Executor::new(config.parallelism)?;
    let mut ledger = EvalLedger::new(config.manifest.benchmark_id.clone());
    for spec in &config.strategies {
        let id = spec.id();
        for run_index in 0..config.repetitions {
            let seed = run_seed(config.base_seed, &id, run_index);
            let ordered: Vec<&Task> = task_order(config.task_order, tasks.len(), seed)
                .into_iter()
                .map(|i| &tasks[i])
                .collect();
            let results = executor.run(spec, &ordered, seed, provider, &verifiers);
            let run = RunRecord::new(id.clone(), run_index, seed, results)?;
            on_run(&run)?;
            ledger = ledger.append_run(run)?;
        }
    }
    Ok(ledger)
}

fn examples(manifest: &BenchmarkManifest) -> Vec<Example> {
    manifest
        .tasks
        .iter()
        .map(|t| {
            let task = t.to_task();
            let truth = match t {
                TaskEntry::External(e) => e.expected.clone(),
                TaskEntry::Sim(s) => format!("answer:{}", s.task_id),
            };
            Example::new(task.id, task.prompt, truth)
        })
        .collect()
}

/// Joint optimization of the simulated pipeline over the manifest's tasks,
/// split in manifest order into train, validation and development sets.
pub fn run_optimize(config: &EvalConfig) -> Result<OptimizationOutcome, HarnessError> {
    config.validate()?;
    let settings = config
        .optimizer
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no optimizer block".into()))?;
    let all = examples(&config.manifest);
    let sizes = settings
        .splits
        .unwrap_or_else(|| SplitSizes::default_for(all.len()));
    if sizes.train + sizes.val + sizes.dev > all.len() {
        return Err(HarnessError::Config(format!(
            "splits need {} tasks, manifest has {}",
            sizes.train + sizes.val + sizes.dev,
            all.len()
        )));
    }
    let (train, rest) = all.split_at(sizes.train);
    let (val, rest) = rest.split_at(sizes.val);
    let dev = &rest[..sizes.dev];

    let seed = settings.seed.unwrap_or(config.base_seed);
    let mut pipeline = SimPipeline::new(settings.model.clone(), settings.modules);
    pipeline.correctness_seed = seed;
    let mut space = SearchSpace::new(
        settings.modules,
        default_token_count(&pipeline.formatting_text),
    );
    space.temperatures = settings.temperatures.clone();
    space.max_demos = settings.max_demos;

    let provider = config.provider.build(&config.manifest)?;
    let metric = ExactMatch;
    let mut optimizer =
        Optimizer::new(&pipeline, &metric, provider.as_ref(), seed).with_space(space);
    optimizer.token_model = settings.model.clone();
    Ok(optimize(
        &optimizer,
        Splits { train, val, dev },
        settings.n_trials,
        &RandomSampler,
        Objectives {
            minimize_tokens: settings.minimize_tokens,
        },
        &config.manifest.benchmark_id,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Generality, Holdout, SimTaskEntry};
    use crate::pricing::ModelPrice;
    use rust_decimal::Decimal;

    fn manifest(n: usize) -> BenchmarkManifest {
        BenchmarkManifest {
            benchmark_id: "unit".into(),
            tasks: (0..n)
                .map(|i| {
                    TaskEntry::Sim(SimTaskEntry {
                        task_id: format!("t{i}"),
                        difficulty: 0.3,
                        prompt_tokens: 20,
                        prompt: None,
                    })
                })
                .collect(),
            generality: Generality::TaskSpecific,
            holdout: Holdout::OutOfDistributionSamples,
            intent_note: None,
        }
    }

    fn sheet() -> PriceSheet {
        PriceSheet::openai_april_2024()
            .with_price(
                "sim-a",
                ModelPrice::per_million(Decimal::new(1, 0), Decimal::new(2, 0)),
            )
            .unwrap()
    }

    fn config(n: usize, strategies: Vec<StrategySpec>) -> EvalConfig {
        let mut m = SimModelSpec::new("sim-a", 0.7);
        m.example_pass_bonus = 0.1;
        let provider = ProviderConfig::Sim(SimProviderConfig {
            models: vec![m],
            rate_limits: BTreeMap::new(),
        });
        EvalConfig::new(manifest(n), strategies, sheet(), provider)
    }

    #[test]
    fn one_strategy_one_run() {
        let mut c = config(3, vec![StrategySpec::zero_shot("sim-a")]);
        c.repetitions = 1;
        let ledger = run_eval(&c).unwrap();
        assert_eq!(ledger.runs().len(), 1);
        assert_eq!(ledger.runs()[0].results.len(), 3);
    }

    #[test]
    fn seeds_are_distinct_and_isolated() {
        let c = config(
            2,
            vec![
                StrategySpec::zero_shot("sim-a"),
                StrategySpec::retry("sim-a", 3, 0.0),
            ],
        );
        let ledger = run_eval(&c).unwrap();
        assert_eq!(ledger.runs().len(), 10);
        let seeds: BTreeSet<u64> = ledger.runs().iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 10);

        let alone = config(2, vec![StrategySpec::retry("sim-a", 3, 0.0)]);
        let other = run_eval(&alone).unwrap();
        let id = StrategySpec::retry("sim-a", 3, 0.0).id();
        assert!(ledger.runs_of(&id).eq(other.runs_of(&id)));
    }

    #[test]
    fn shuffle_is_a_permutation_and_seeded() {
        let a = task_order(TaskOrderPolicy::ShuffledPerRun, 50, 7);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, task_order(TaskOrderPolicy::ShuffledPerRun, 50, 7));
        assert_ne!(a, task_order(TaskOrderPolicy::ShuffledPerRun, 50, 8));
        assert_eq!(task_order(TaskOrderPolicy::Given, 4, 7), vec![0, 1, 2, 3]);
    }

    #[test]
    fn preflight_errors_are_config_errors() {
        let c = config(2, vec![StrategySpec::zero_shot("nobody")]);
        let e = run_eval(&c).unwrap_err();
        assert_eq!(e.exit_code(), 78);
        assert!(e.to_string().contains("nobody"));

        let mut c = config(2, vec![StrategySpec::zero_shot("sim-a")]);
        c.price_sheet = PriceSheet::openai_april_2024();
        assert!(run_eval(&c).unwrap_err().to_string().contains("sim-a"));

        let c = config(
            2,
            vec![
                StrategySpec::zero_shot("sim-a"),
                StrategySpec::zero_shot("sim-a"),
            ],
        );
        assert!(run_eval(&c).is_err());

        let mut c = config(2, vec![StrategySpec::zero_shot("sim-a")]);
        c.repetitions = 0;
        assert!(run_eval(&c).is_err());
    }

    #[test]
    fn round_trips_through_json_and_files() {
        let mut c = config(
            4,
            vec![
                StrategySpec::warming("sim-a"),
                StrategySpec::escalation(["sim-a"]),
            ],
        );
        c.task_order = TaskOrderPolicy::ShuffledPerRun;
        c.base_seed = 99;
        let back = EvalConfig::from_json(&c.to_json(), Path::new(".")).unwrap();
        assert_eq!(back, c);

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("m.json"),
            serde_json::to_string(&c.manifest).unwrap(),
        )
        .unwrap();
        std::fs::write(dir.path().join("p.json"), c.price_sheet.to_json()).unwrap();
        let text = serde_json::json!({
            "manifest": "m.json",
            "price_sheet": "p.json",
            "provider": {"kind": "sim", "models": [{"model": "sim-a", "skill": 0.7, "example_pass_bonus": 0.1, "output_tokens_mean": 100}]},
            "strategies": [{"kind": "warming", "model": "sim-a"}, {"kind": "escalation", "chain": ["sim-a"]}],
            "base_seed": 99,
            "task_order": "shuffled_per_run"
        });
        std::fs::write(dir.path().join("c.json"), text.to_string()).unwrap();
        assert_eq!(EvalConfig::load(&dir.path().join("c.json")).unwrap(), c);
    }

    #[test]
    fn provider_config_rejects_unknown_fields() {
        let ok: ProviderConfig = serde_json::from_str(
            r#"{"kind":"sim","models":[{"model":"a","skill":0.5,"output_tokens_mean":10}]}"#,
        )
        .unwrap();
        assert!(ok.knows_model("a"));
        let bad = serde_json::from_str::<ProviderConfig>(r#"{"kind":"sim","models":[],"bogus":1}"#);
        assert!(bad.is_err());
        #[cfg(feature = "http")]
        {
            let http: ProviderConfig = serde_json::from_str(
                r#"{"kind":"http","base_url":"http://localhost:1","models":{"a":"remote-a"}}"#,
            )
            .unwrap();
            assert!(http.knows_model("a") && !http.knows_model("remote-a"));
        }
    }

    #[test]
    fn external_tasks_need_a_real_provider() {
        let mut c = config(1, vec![StrategySpec::zero_shot("sim-a")]);
        c.manifest
            .tasks
            .push(TaskEntry::External(crate::harness::ExternalTask {
                task_id: "x".into(),
                prompt: "p".into(),
                expected: "e".into(),
            }));
        assert_eq!(c.validate().unwrap_err().exit_code(), 78);
    }

    #[test]
    fn optimize_from_config() {
        let mut c = config(20, vec![StrategySpec::zero_shot("sim-a")]);
        let mut o = OptimizerSettings::new("sim-a");
        o.n_trials = 4;
        c.optimizer = Some(o);
        let out = run_optimize(&c).unwrap();
        assert_eq!(out.trials.len(), 4);
        // 10 train, 5 val, 5 dev, two modules each.
        let expected = 10 * 2 + 4 * 5 * 2 + out.pareto.len() * 5 * 2;
        assert_eq!(out.ledger.total_calls(), expected);

        c.optimizer.as_mut().unwrap().splits = Some(SplitSizes {
            train: 10,
            val: 10,
            dev: 10,
        });
        assert_eq!(run_optimize(&c).unwrap_err().exit_code(), 78);
    }
}
