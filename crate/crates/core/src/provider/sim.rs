//! Deterministic simulated provider.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::rng::DrawKey;
use super::tokens::TokenCounter;
use super::{CompletionRequest, CompletionResponse, Provider, ProviderError, SeedMaterial};
use crate::pricing::TokenUsage;

/// Example-pass probability gained per unit of temperature.
pub const TEMPERATURE_GAIN: f64 = 0.1;

/// Scale of the chance that a candidate failing the example tests still passes the hidden ones.
pub const HIDDEN_RESIDUAL_FACTOR: f64 = 0.1;

const DRAW_EXAMPLE: u64 = 0;
const DRAW_HIDDEN: u64 = 1;
const DRAW_RESIDUAL: u64 = 2;
const DRAW_LENGTH: u64 = 3;
const DRAW_LATENCY: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimModelSpec {
    pub model: String,
    pub skill: f64,
    #[serde(default)]
    pub example_pass_bonus: f64,
    #[serde(default)]
    pub hidden_gap: f64,
    #[serde(default)]
    pub prompt_overhead_tokens: u64,
    pub output_tokens_mean: u64,
}

impl SimModelSpec {
    pub fn new(model: impl Into<String>, skill: f64) -> Self {
        SimModelSpec {
            model: model.into(),
            skill,
            example_pass_bonus: 0.0,
            hidden_gap: 0.0,
            prompt_overhead_tokens: 0,
            output_tokens_mean: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.model.is_empty() {
            return Err(ProviderError::InvalidRequest("empty model id".into()));
        }
        if !unit(self.skill)
            || !unit(self.hidden_gap)
            || !(self.example_pass_bonus >= 0.0 && self.example_pass_bonus.is_finite())
        {
            return Err(ProviderError::InvalidRequest(format!(
                "model {:?}: parameters out of range",
                self.model
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTaskSpec {
    pub task_id: String,
    pub difficulty: f64,
    #[serde(default)]
    pub prompt_tokens: u64,
}

impl SimTaskSpec {
    pub fn new(task_id: impl Into<String>, difficulty: f64, prompt_tokens: u64) -> Self {
        SimTaskSpec {
            task_id: task_id.into(),
            difficulty,
            prompt_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.task_id.is_empty() || !(0.0..=1.0).contains(&self.difficulty) {
            return Err(ProviderError::InvalidRequest(format!(
                "task {:?}: difficulty outside [0, 1]",
                self.task_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimDraws {
    pub example_pass: bool,
    pub hidden_pass: bool,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Example and hidden test outcomes of one simulated call.
///
/// Each outcome compares one uniform draw with a threshold that is monotone
/// in skill and bonus, so raising either never turns a pass into a failure.
pub fn sim_success_draws(
    model: &SimModelSpec,
    task: &SimTaskSpec,
    temperature: f64,
    seed: &SeedMaterial,
) -> SimDraws {
    let key = DrawKey::for_call(seed, &model.model, &task.task_id, temperature);
    draws_for_key(model, task, temperature, &key)
}

fn draws_for_key(
    model: &SimModelSpec,
    task: &SimTaskSpec,
    temperature: f64,
    key: &DrawKey,
) -> SimDraws {
    let p_base = clamp01(model.skill - task.difficulty);
    let p_example = clamp01(p_base + model.example_pass_bonus + TEMPERATURE_GAIN * temperature);
    let example_pass = key.uniform(DRAW_EXAMPLE) < p_example;
    let carried = example_pass && key.uniform(DRAW_HIDDEN) < 1.0 - model.hidden_gap;
    let residual =
        key.uniform(DRAW_RESIDUAL) < p_base * (1.0 - model.hidden_gap) * HIDDEN_RESIDUAL_FACTOR;
    SimDraws {
        example_pass,
        hidden_pass: carried || residual,
    }
}

/// Milliseconds on some monotone timeline.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    pub burst: u32,
    pub refill_per_minute: f64,
}

#[derive(Debug)]
struct Bucket {
    limit: RateLimit,
    tokens: f64,
    last_ms: u64,
}

impl Bucket {
    fn new(limit: RateLimit, now_ms: u64) -> Self {
        Bucket {
            limit,
            tokens: limit.burst as f64,
            last_ms: now_ms,
        }
    }

    /// Takes one token or returns the wait until one is available.
    fn try_take(&mut self, now_ms: u64) -> Result<(), u64> {
        let per_ms = self.limit.refill_per_minute / 60_000.0;
        let elapsed = now_ms.saturating_sub(self.last_ms) as f64;
        self.tokens = (self.tokens + elapsed * per_ms).min(self.limit.burst as f64);
        self.last_ms = now_ms;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else if per_ms > 0.0 {
            Err(((1.0 - self.tokens) / per_ms).ceil() as u64)
        } else {
            Err(u64::MAX)
        }
    }
}

/// Simulated provider over fixed model and task tables.
pub struct SimProvider {
    models: BTreeMap<String, SimModelSpec>,
    tasks: BTreeMap<String, SimTaskSpec>,
    tokens: TokenCounter,
    buckets: BTreeMap<String, Mutex<Bucket>>,
    clock: Arc<dyn Clock>,
}

impl SimProvider {
    pub fn new(
        models: impl IntoIterator<Item = SimModelSpec>,
        tasks: impl IntoIterator<Item = SimTaskSpec>,
    ) -> Result<Self, ProviderError> {
        let mut m = BTreeMap::new();
        for spec in models {
            spec.validate()?;
            if m.insert(spec.model.clone(), spec).is_some() {
                return Err(ProviderError::InvalidRequest(
                    "duplicate model in spec table".into(),
                ));
            }
        }
        let mut t = BTreeMap::new();
        for spec in tasks {
            spec.validate()?;
            if t.insert(spec.task_id.clone(), spec).is_some() {
                return Err(ProviderError::InvalidRequest(
                    "duplicate task in spec table".into(),
                ));
            }
        }
        Ok(SimProvider {
            models: m,
            tasks: t,
            tokens: TokenCounter::new(),
            buckets: BTreeMap::new(),
            clock: Arc::new(SystemClock::default()),
        })
    }

    pub fn with_token_counter(mut self, tokens: TokenCounter) -> Self {
        self.tokens = tokens;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        let now = clock.now_ms();
        for b in self.buckets.values_mut() {
            b.get_mut().expect("bucket lock").last_ms = now;
        }
        self.clock = clock;
        self
    }

    pub fn with_rate_limit(mut self, model: impl Into<String>, limit: RateLimit) -> Self {
        let now = self.clock.now_ms();
        self.buckets
            .insert(model.into(), Mutex::new(Bucket::new(limit, now)));
        self
    }

    pub fn model(&self, id: &str) -> Option<&SimModelSpec> {
        self.models.get(id)
    }

    pub fn task(&self, id: &str) -> Option<&SimTaskSpec> {
        self.tasks.get(id)
    }

    pub fn token_counter(&self) -> &TokenCounter {
        &self.tokens
    }
}

impl fmt::Debug for SimProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimProvider")
            .field("models", &self.models.keys().collect::<Vec<_>>())
            .field("tasks", &self.tasks.len())
            .field("rate_limited", &self.buckets.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Text of a simulated candidate; [`parse_candidate`] reads it back.
pub fn candidate_text(task_id: &str, model: &str, draws: SimDraws) -> String {
    format!(
        "sim-candidate task={task_id} model={model} example={} hidden={}",
        draws.example_pass as u8, draws.hidden_pass as u8
    )
}

/// `(task_id, example_pass, hidden_pass)` of a simulated candidate.
pub fn parse_candidate(text: &str) -> Option<(&str, bool, bool)> {
    let rest = text.strip_prefix("sim-candidate ")?;
    let (mut task, mut example, mut hidden) = (None, None, None);
    for field in rest.split(' ') {
        let (k, v) = field.split_once('=')?;
        match k {
            "task" => task = Some(v),
            "example" => example = Some(v == "1"),
            "hidden" => hidden = Some(v == "1"),
            _ => {}
        }
    }
    Some((task?, example?, hidden?))
}

impl Provider for SimProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let model = self
            .models
            .get(request.model())
            .ok_or_else(|| ProviderError::UnknownModel(request.model().into()))?;
        let task_id = &request.seed().task_id;
        let task = self.tasks.get(task_id).ok_or_else(|| {
            ProviderError::InvalidRequest(format!("task {task_id:?} not in the simulator's table"))
        })?;
        if let Some(bucket) = self.buckets.get(request.model()) {
            let now = self.clock.now_ms();
            bucket
                .lock()
                .expect("bucket lock")
                .try_take(now)
                .map_err(|wait| ProviderError::RateLimited {
                    retry_after_ms: wait,
                    attempts: 1,
                })?;
        }
        let key = DrawKey::for_call(
            request.seed(),
            &model.model,
            &task.task_id,
            request.temperature(),
        );
        let draws = draws_for_key(model, task, request.temperature(), &key);
        let input_tokens = task.prompt_tokens
            + model.prompt_overhead_tokens
            + self.tokens.count(request.prompt(), &model.model);
        let output =
            (model.output_tokens_mean as f64 * (0.5 + key.uniform(DRAW_LENGTH))).round() as u64;
        let output_tokens = output.clamp(1, request.max_output_tokens());
        let latency_ms = 100 + 10 * output_tokens + (key.uniform(DRAW_LATENCY) * 100.0) as u64;
        Ok(CompletionResponse {
            text: candidate_text(&task.task_id, &model.model, draws),
            usage: TokenUsage::new(input_tokens, output_tokens),
            latency_ms,
            attempts: 1,
        })
    }

    fn knows_model(&self, model: &str) -> bool {
        self.models.contains_key(model)
    }
}
