//! Baseline agents: zero-shot, retry, warming and escalation.
//!
//! Every strategy is a fixed plan of `(model, temperature)` attempts that
//! stops at the first candidate passing the example tests. The accepted
//! candidate (or the last one, if none passed) is scored by the hidden tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{CallPurpose, CallRecord, TaskResult};
use crate::pricing::TokenUsage;
use crate::provider::{parse_candidate, CompletionRequest, Provider, SeedMaterial};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u64 = 1024;

/// Temperatures of the five warming attempts.
pub const DEFAULT_WARMING_SCHEDULE: [f64; 5] = [0.0, 0.3, 0.3, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("invalid strategy {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("strategy {id} uses model {model:?} unknown to the provider")]
    UnknownModel { id: String, model: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    ExampleTests,
    HiddenTests,
}

/// Judges a candidate for a task. Must be deterministic.
pub trait Verifier: Send + Sync {
    fn kind(&self) -> VerifierKind;

    fn check(&self, task_id: &str, candidate: &str) -> bool;
}

/// Reads the verdict a simulated provider embedded in its candidate.
/// Malformed candidates and candidates for another task fail.
#[derive(Debug, Clone, Copy)]
pub struct SimVerifier(pub VerifierKind);

impl Verifier for SimVerifier {
    fn kind(&self) -> VerifierKind {
        self.0
    }

    fn check(&self, task_id: &str, candidate: &str) -> bool {
        match parse_candidate(candidate) {
            Some((task, example, hidden)) if task == task_id => match self.0 {
                VerifierKind::ExampleTests => example,
                VerifierKind::HiddenTests => hidden,
            },
            _ => false,
        }
    }
}

/// Passes candidates containing the expected text for their task.
#[derive(Debug, Clone)]
pub struct ExpectVerifier {
    kind: VerifierKind,
    expected: BTreeMap<String, String>,
}

impl ExpectVerifier {
    pub fn new(kind: VerifierKind, expected: BTreeMap<String, String>) -> Self {
        ExpectVerifier { kind, expected }
    }
}

impl Verifier for ExpectVerifier {
    fn kind(&self) -> VerifierKind {
        self.kind
    }

    fn check(&self, task_id: &str, candidate: &str) -> bool {
        self.expected
            .get(task_id)
            .is_some_and(|e| candidate.contains(e.as_str()))
    }
}

/// The example-test verifier strategies may consult and the hidden-test verifier used for scoring.
#[derive(Clone)]
pub struct Verifiers {
    example: Arc<dyn Verifier>,
    hidden: Arc<dyn Verifier>,
}

impl Verifiers {
    pub fn new(example: Arc<dyn Verifier>, hidden: Arc<dyn Verifier>) -> Result<Self, String> {
        if example.kind() != VerifierKind::ExampleTests
            || hidden.kind() != VerifierKind::HiddenTests
        {
            return Err("verifier kinds must be (example_tests, hidden_tests)".into());
        }
        Ok(Verifiers { example, hidden })
    }

    pub fn simulated() -> Self {
        Verifiers {
            example: Arc::new(SimVerifier(VerifierKind::ExampleTests)),
            hidden: Arc::new(SimVerifier(VerifierKind::HiddenTests)),
        }
    }

    pub fn example(&self) -> &dyn Verifier {
        self.example.as_ref()
    }

    pub fn hidden(&self) -> &dyn Verifier {
        self.hidden.as_ref()
    }
}

impl fmt::Debug for Verifiers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Verifiers")
    }
}

/// A task as seen by a strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub max_output_tokens: u64,
}

impl Task {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Task {
            id: id.into(),
            prompt: prompt.into(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

fn default_schedule() -> Vec<f64> {
    DEFAULT_WARMING_SCHEDULE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    ZeroShot {
        model: String,
    },
    Retry {
        model: String,
        #[serde(default = "default_max_attempts")]
        max_attempts: u32,
        #[serde(default)]
        temperature: f64,
    },
    Warming {
        model: String,
        #[serde(default = "default_schedule")]
        schedule: Vec<f64>,
    },
    Escalation {
        chain: Vec<String>,
    },
}

fn temps(ts: &[f64]) -> String {
    ts.iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

impl StrategySpec {
    pub fn zero_shot(model: impl Into<String>) -> Self {
        StrategySpec::ZeroShot {
            model: model.into(),
        }
    }

    pub fn retry(model: impl Into<String>, max_attempts: u32, temperature: f64) -> Self {
        StrategySpec::Retry {
            model: model.into(),
            max_attempts,
            temperature,
        }
    }

    pub fn warming(model: impl Into<String>) -> Self {
        StrategySpec::Warming {
            model: model.into(),
            schedule: default_schedule(),
        }
    }

    pub fn warming_with(model: impl Into<String>, schedule: Vec<f64>) -> Self {
        StrategySpec::Warming {
            model: model.into(),
            schedule,
        }
    }

    pub fn escalation<S: Into<String>>(chain: impl IntoIterator<Item = S>) -> Self {
        StrategySpec::Escalation {
            chain: chain.into_iter().map(Into::into).collect(),
        }
    }

    /// Canonical id used as the ledger key.
    pub fn id(&self) -> String {
        match self {
            StrategySpec::ZeroShot { model } => format!("zero_shot:{model}"),
            StrategySpec::Retry {
                model,
                max_attempts,
                temperature,
            } => {
                format!("retry:{model}:k{max_attempts}:t{temperature}")
            }
            StrategySpec::Warming { model, schedule } => {
                format!("warming:{model}:{}", temps(schedule))
            }
            StrategySpec::Escalation { chain } => format!("escalation:{}", chain.join(">")),
        }
    }

    pub fn models(&self) -> Vec<&str> {
        match self {
            StrategySpec::ZeroShot { model }
            | StrategySpec::Retry { model, .. }
            | StrategySpec::Warming { model, .. } => vec![model.as_str()],
            StrategySpec::Escalation { chain } => chain.iter().map(String::as_str).collect(),
        }
    }

    /// The `(model, temperature)` of every attempt, in order.
    pub fn plan(&self) -> Vec<(&str, f64)> {
        match self {
            StrategySpec::ZeroShot { model } => vec![(model, 0.0)],
            StrategySpec::Retry {
                model,
                max_attempts,
                temperature,
            } => {
                vec![(model.as_str(), *temperature); *max_attempts as usize]
            }
            StrategySpec::Warming { model, schedule } => {
                schedule.iter().map(|t| (model.as_str(), *t)).collect()
            }
            StrategySpec::Escalation { chain } => chain.iter().map(|m| (m.as_str(), 0.0)).collect(),
        }
    }

    /// Checks the spec's shape and, if a provider is given, that it knows every model.
    pub fn validate(&self, provider: Option<&dyn Provider>) -> Result<(), StrategyError> {
        let id = self.id();
        let invalid = |reason: &str| {
            Err(StrategyError::Invalid {
                id: id.clone(),
                reason: reason.into(),
            })
        };
        match self {
            StrategySpec::Retry {
                max_attempts: 0, ..
            } => return invalid("max_attempts must be at least 1"),
            StrategySpec::Warming { schedule, .. } if schedule.is_empty() => {
                return invalid("empty schedule")
            }
            StrategySpec::Escalation { chain } if chain.is_empty() => {
                return invalid("empty chain")
            }
            StrategySpec::Escalation { chain }
                if chain.iter().collect::<BTreeSet<_>>().len() != chain.len() =>
            {
                return invalid("duplicate model in chain")
            }
            _ => {}
        }
        for (model, t) in self.plan() {
            if model.is_empty() {
                return invalid("empty model id");
            }
            if !(0.0..=crate::provider::MAX_TEMPERATURE).contains(&t) {
                return invalid("temperature outside [0, 2]");
            }
            if let Some(p) = provider {
                if !p.knows_model(model) {
                    return Err(StrategyError::UnknownModel {
                        id: id.clone(),
                        model: model.into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Runs one task under `spec`. Provider failures end the task as a failure
/// with an error annotation and a zero-usage call record; they never panic.
pub fn run_task(
    spec: &StrategySpec,
    task: &Task,
    run_seed: u64,
    provider: &dyn Provider,
    verifiers: &Verifiers,
) -> TaskResult {
    let mut calls = Vec::new();
    let mut accepted = None;
    let mut last = None;
    let mut error = None;
    for (i, (model, temperature)) in spec.plan().into_iter().enumerate() {
        let attempt = i as u32;
        let seed = SeedMaterial::new(run_seed, task.id.clone(), attempt);
        let outcome = CompletionRequest::new(
            model,
            task.prompt.clone(),
            temperature,
            task.max_output_tokens,
            seed,
        )
        .and_then(|req| provider.complete(&req));
        match outcome {
            Ok(resp) => {
                let mut call = CallRecord::new(
                    model,
                    resp.usage,
                    temperature,
                    attempt,
                    CallPurpose::Generate,
                );
                call.latency_ms = resp.latency_ms;
                call.provider_attempts = resp.attempts;
                calls.push(call);
                if verifiers.example().check(&task.id, &resp.text) {
                    accepted = Some(resp.text);
                    break;
                }
                last = Some(resp.text);
            }
            Err(e) => {
                let mut call = CallRecord::new(
                    model,
                    TokenUsage::ZERO,
                    temperature,
                    attempt,
                    CallPurpose::Generate,
                );
                call.provider_attempts = e.attempts();
                call.error = Some(e.annotation().into());
                calls.push(call);
                error = Some(e.annotation().to_string());
                break;
            }
        }
    }
    let example_passed = accepted.is_some();
    let success = error.is_none()
        && accepted
            .or(last)
            .is_some_and(|c| verifiers.hidden().check(&task.id, &c));
    let mut result = TaskResult::new(task.id.clone(), success, example_passed, calls);
    result.error = error;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{
        sim_success_draws, ManualClock, ProviderError, RateLimit, SimModelSpec, SimProvider,
        SimTaskSpec,
    };

    fn sim(models: Vec<SimModelSpec>, tasks: Vec<SimTaskSpec>) -> SimProvider {
        SimProvider::new(models, tasks).unwrap()
    }

    fn spec(model: &str, skill: f64, gap: f64) -> SimModelSpec {
        SimModelSpec {
            hidden_gap: gap,
            output_tokens_mean: 50,
            ..SimModelSpec::new(model, skill)
        }
    }

    fn task(id: &str) -> Task {
        Task::new(id, format!("Solve {id}."))
    }

    #[test]
    fn canonical_ids() {
        assert_eq!(StrategySpec::zero_shot("gpt-4").id(), "zero_shot:gpt-4");
        assert_eq!(
            StrategySpec::retry("gpt-4", 5, 0.0).id(),
            "retry:gpt-4:k5:t0"
        );
        assert_eq!(StrategySpec::retry("m", 3, 0.2).id(), "retry:m:k3:t0.2");
        assert_eq!(
            StrategySpec::warming("m").id(),
            "warming:m:0-0.3-0.3-0.5-0.5"
        );
        assert_eq!(StrategySpec::escalation(["a", "b"]).id(), "escalation:a>b");
    }

    #[test]
    fn spec_json_defaults() {
        let s: StrategySpec = serde_json::from_str(r#"{"kind":"retry","model":"m"}"#).unwrap();
        assert_eq!(s, StrategySpec::retry("m", 5, 0.0));
        let s: StrategySpec = serde_json::from_str(r#"{"kind":"warming","model":"m"}"#).unwrap();
        assert_eq!(s, StrategySpec::warming("m"));
        assert!(
            serde_json::from_str::<StrategySpec>(r#"{"kind":"retry","model":"m","k":3}"#).is_err()
        );
        let back: StrategySpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation() {
        let p = sim(vec![spec("a", 0.5, 0.0)], vec![]);
        assert!(StrategySpec::retry("a", 0, 0.0).validate(None).is_err());
        assert!(StrategySpec::warming_with("a", vec![])
            .validate(None)
            .is_err());
        assert!(StrategySpec::warming_with("a", vec![0.0, 2.5])
            .validate(None)
            .is_err());
        assert!(StrategySpec::escalation(Vec::<String>::new())
            .validate(None)
            .is_err());
        assert!(StrategySpec::escalation(["a", "a"]).validate(None).is_err());
        assert!(StrategySpec::escalation(["a"]).validate(Some(&p)).is_ok());
        assert!(matches!(
            StrategySpec::escalation(["a", "b"]).validate(Some(&p)),
            Err(StrategyError::UnknownModel { .. })
        ));
    }

    #[test]
    fn zero_shot_certain_outcomes() {
        let p = sim(
            vec![spec("good", 1.0, 0.0), spec("bad", 0.0, 0.0)],
            vec![SimTaskSpec::new("t", 0.0, 10)],
        );
        let v = Verifiers::simulated();
        let r = run_task(&StrategySpec::zero_shot("good"), &task("t"), 1, &p, &v);
        assert!(r.success && r.example_tests_passed);
        assert_eq!(r.calls.len(), 1);
        assert_eq!(r.calls[0].temperature, 0.0);
        let r = run_task(&StrategySpec::zero_shot("bad"), &task("t"), 1, &p, &v);
        assert!(!r.success && !r.example_tests_passed);
        assert_eq!(r.calls.len(), 1);
    }

    #[test]
    fn retry_early_stop_matches_zero_shot() {
        let p = sim(
            vec![spec("m", 1.0, 0.0)],
            vec![SimTaskSpec::new("t", 0.0, 10)],
        );
        let v = Verifiers::simulated();
        let zs = run_task(&StrategySpec::zero_shot("m"), &task("t"), 3, &p, &v);
        let rt = run_task(&StrategySpec::retry("m", 5, 0.0), &task("t"), 3, &p, &v);
        assert_eq!(rt.calls.len(), 1);
        assert_eq!(rt, zs);
    }

    #[test]
    fn retry_exhaustion_scores_last_candidate() {
        let p = sim(
            vec![spec("m", 0.0, 0.0)],
            vec![SimTaskSpec::new("t", 1.0, 10)],
        );
        let r = run_task(
            &StrategySpec::retry("m", 5, 0.0),
            &task("t"),
            3,
            &p,
            &Verifiers::simulated(),
        );
        assert_eq!(r.calls.len(), 5);
        assert_eq!(
            r.calls.iter().map(|c| c.attempt_index).collect::<Vec<_>>(),
            [0, 1, 2, 3, 4]
        );
        assert!(!r.success && !r.example_tests_passed);
    }

    #[test]
    fn retry_example_pass_with_hidden_failure() {
        let m = spec("m", 0.6, 0.3);
        let t = SimTaskSpec::new("t", 0.4, 10);
        // Enumerate the provider's draw stream for a seed whose first example pass is attempt 2
        // and whose accepted candidate fails the hidden tests.
        let seed = (0u64..)
            .find(|&s| {
                let d: Vec<_> = (0..3)
                    .map(|a| sim_success_draws(&m, &t, 0.0, &SeedMaterial::new(s, "t", a)))
                    .collect();
                !d[0].example_pass && !d[1].example_pass && d[2].example_pass && !d[2].hidden_pass
            })
            .unwrap();
        let p = sim(vec![m], vec![t]);
        let r = run_task(
            &StrategySpec::retry("m", 5, 0.0),
            &task("t"),
            seed,
            &p,
            &Verifiers::simulated(),
        );
        assert_eq!(r.calls.len(), 3);
        assert!(r.example_tests_passed);
        assert!(!r.success);
    }

    #[test]
    fn warming_records_schedule() {
        let p = sim(
            vec![spec("m", 0.0, 0.0)],
            vec![SimTaskSpec::new("t", 1.0, 10)],
        );
        let r = run_task(
            &StrategySpec::warming("m"),
            &task("t"),
            0,
            &p,
            &Verifiers::simulated(),
        );
        let ts: Vec<f64> = r.calls.iter().map(|c| c.temperature).collect();
        assert_eq!(ts, DEFAULT_WARMING_SCHEDULE);
    }

    #[test]
    fn degenerate_warming_is_single_retry() {
        let p = sim(
            vec![spec("m", 0.5, 0.2)],
            (0..50)
                .map(|i| SimTaskSpec::new(format!("t{i}"), 0.2, 10))
                .collect(),
        );
        let v = Verifiers::simulated();
        for i in 0..50 {
            let t = task(&format!("t{i}"));
            assert_eq!(
                run_task(&StrategySpec::warming_with("m", vec![0.0]), &t, 9, &p, &v),
                run_task(&StrategySpec::retry("m", 1, 0.0), &t, 9, &p, &v)
            );
        }
    }

    #[test]
    fn escalation_order_and_stop() {
        let p = sim(
            vec![
                spec("cheap", 1.0, 0.0),
                spec("mid", 0.0, 0.0),
                spec("top", 1.0, 0.0),
            ],
            vec![SimTaskSpec::new("t", 0.0, 10)],
        );
        let v = Verifiers::simulated();
        let r = run_task(
            &StrategySpec::escalation(["cheap", "top"]),
            &task("t"),
            0,
            &p,
            &v,
        );
        assert_eq!(r.calls.len(), 1);
        assert_eq!(r.calls[0].model, "cheap");
        let p2 = sim(
            vec![spec("a", 0.0, 0.0), spec("b", 0.0, 0.0)],
            vec![SimTaskSpec::new("t", 1.0, 10)],
        );
        let r = run_task(
            &StrategySpec::escalation(["a", "b"]),
            &task("t"),
            0,
            &p2,
            &v,
        );
        assert_eq!(
            r.calls.iter().map(|c| c.model.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert!(r.calls.iter().all(|c| c.temperature == 0.0));
        let r = run_task(
            &StrategySpec::escalation(["mid", "top"]),
            &task("t"),
            0,
            &p,
            &v,
        );
        assert_eq!(r.calls.len(), 2);
        assert!(r.success);
    }

    #[test]
    fn escalation_trades_accuracy_for_cost() {
        let tasks: Vec<SimTaskSpec> = (0..400)
            .map(|i| SimTaskSpec::new(format!("t{i}"), 0.3, 200))
            .collect();
        let cheap = SimModelSpec {
            example_pass_bonus: 0.3,
            ..spec("cheap", 0.6, 0.5)
        };
        let top = SimModelSpec {
            output_tokens_mean: 400,
            ..spec("top", 0.9, 0.0)
        };
        let p = sim(vec![cheap, top], tasks.clone());
        let v = Verifiers::simulated();
        let (mut esc_ok, mut top_ok, mut esc_top_calls) = (0, 0, 0);
        for t in &tasks {
            let t = task(&t.task_id);
            let e = run_task(&StrategySpec::escalation(["cheap", "top"]), &t, 5, &p, &v);
            let z = run_task(&StrategySpec::zero_shot("top"), &t, 5, &p, &v);
            esc_ok += e.success as u32;
            top_ok += z.success as u32;
            esc_top_calls += e.calls.iter().filter(|c| c.model == "top").count();
        }
        assert!(esc_ok < top_ok, "{esc_ok} vs {top_ok}");
        assert!(esc_top_calls < tasks.len());
    }

    #[test]
    fn rate_limited_call_is_recorded_not_raised() {
        let clock = Arc::new(ManualClock::new(0));
        let p = sim(
            vec![spec("m", 0.0, 0.0)],
            vec![SimTaskSpec::new("t", 1.0, 10)],
        )
        .with_clock(clock)
        .with_rate_limit(
            "m",
            RateLimit {
                burst: 1,
                refill_per_minute: 1.0,
            },
        );
        let r = run_task(
            &StrategySpec::retry("m", 5, 0.0),
            &task("t"),
            0,
            &p,
            &Verifiers::simulated(),
        );
        assert_eq!(r.calls.len(), 2);
        assert_eq!(r.error.as_deref(), Some("rate_limited"));
        assert_eq!(r.calls[1].error.as_deref(), Some("rate_limited"));
        assert_eq!(r.calls[1].usage, TokenUsage::ZERO);
        assert!(!r.success);
    }

    struct Failing;

    impl Provider for Failing {
        fn complete(
            &self,
            _: &CompletionRequest,
        ) -> Result<crate::provider::CompletionResponse, ProviderError> {
            Err(ProviderError::Transport("down".into()))
        }

        fn knows_model(&self, _: &str) -> bool {
            true
        }
    }

    #[test]
    fn transport_failure_marks_task() {
        let r = run_task(
            &StrategySpec::zero_shot("m"),
            &task("t"),
            0,
            &Failing,
            &Verifiers::simulated(),
        );
        assert_eq!(r.error.as_deref(), Some("transport"));
        assert_eq!(r.calls.len(), 1);
    }

    #[test]
    fn verifiers() {
        let v = SimVerifier(VerifierKind::HiddenTests);
        assert!(v.check("t", "sim-candidate task=t model=m example=0 hidden=1"));
        assert!(!v.check("u", "sim-candidate task=t model=m example=0 hidden=1"));
        assert!(!v.check("t", "garbage"));
        let e = ExpectVerifier::new(
            VerifierKind::ExampleTests,
            [("t".to_string(), "42".to_string())].into(),
        );
        assert!(e.check("t", "answer: 42"));
        assert!(!e.check("t", "answer: 41"));
        assert!(!e.check("x", "42"));
        assert!(Verifiers::new(Arc::new(v), Arc::new(e)).is_err());
    }
}
