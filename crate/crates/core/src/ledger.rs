//! Append-only, machine-readable record of evaluation runs.
//!
//! On disk a ledger is JSONL:
//!
//! ```text
//! {"record":"ledger","schema_version":1,"benchmark_id":"humaneval-sim"}
//! {"record":"run","strategy_id":"retry:gpt-4:k5:t0","run_index":0,"seed":42,"task_order":["t1","t0"],"task_count":2}
//! {"record":"task","task_id":"t1","success":true,"example_tests_passed":true,"calls":[...],"wall_time_ms":812}
//! {"record":"task","task_id":"t0", ...}
//! ```
//!
//! Each run is a header line followed by one line per task result, so
//! appending a run never rewrites earlier bytes. Only token counts and model
//! ids are stored, never dollar amounts. Fields this version does not know
//! about are kept verbatim and written back on save.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::pricing::TokenUsage;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("run {strategy_id}#{run_index} already recorded")]
    DuplicateRun { strategy_id: String, run_index: u32 },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("unsupported schema_version {0} (supported: {SCHEMA_VERSION})")]
    Version(u32),
    #[error("invalid run record: {0}")]
    InvalidRun(String),
    #[error("strategy {0} not present in ledger")]
    UnknownStrategy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Generate,
    Debug,
    Reflect,
    Other,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

/// One provider invocation, successful or not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub model: String,
    pub usage: TokenUsage,
    pub temperature: f64,
    pub latency_ms: u64,
    pub attempt_index: u32,
    pub purpose: CallPurpose,
    /// HTTP attempts behind this logical call (backoff retries included).
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub provider_attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CallRecord {
    pub fn new(
        model: impl Into<String>,
        usage: TokenUsage,
        temperature: f64,
        attempt_index: u32,
        purpose: CallPurpose,
    ) -> Self {
        CallRecord {
            model: model.into(),
            usage,
            temperature,
            latency_ms: 0,
            attempt_index,
            purpose,
            provider_attempts: 1,
            error: None,
            extra: Map::new(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.model.is_empty() {
            return Err("call with empty model id".into());
        }
        if !(self.temperature.is_finite() && (0.0..=2.0).contains(&self.temperature)) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        Ok(())
    }
}

/// Latency is environment-dependent and excluded from equality.
impl PartialEq for CallRecord {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model
            && self.usage == other.usage
            && self.temperature.to_bits() == other.temperature.to_bits()
            && self.attempt_index == other.attempt_index
            && self.purpose == other.purpose
            && self.provider_attempts == other.provider_attempts
            && self.error == other.error
            && self.extra == other.extra
    }
}

/// Outcome of one task attempt by one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub success: bool,
    pub example_tests_passed: bool,
    pub calls: Vec<CallRecord>,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl TaskResult {
    pub fn new(
        task_id: impl Into<String>,
        success: bool,
        example_tests_passed: bool,
        calls: Vec<CallRecord>,
    ) -> Self {
        let wall_time_ms = calls.iter().map(|c| c.latency_ms).sum();
        TaskResult {
            task_id: task_id.into(),
            success,
            example_tests_passed,
            calls,
            wall_time_ms,
            error: None,
            extra: Map::new(),
        }
    }

    pub fn usage(&self) -> TokenUsage {
        self.calls.iter().map(|c| c.usage).sum()
    }
}

/// Wall time is environment-dependent and excluded from equality.
impl PartialEq for TaskResult {
    fn eq(&self, other: &Self) -> bool {
        self.task_id == other.task_id
            && self.success == other.success
            && self.example_tests_passed == other.example_tests_passed
            && self.calls == other.calls
            && self.error == other.error
            && self.extra == other.extra
    }
}

/// One repetition of one strategy over a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy_id: String,
    pub run_index: u32,
    pub seed: u64,
    pub task_order: Vec<String>,
    pub results: Vec<TaskResult>,
    pub extra: Map<String, Value>,
}

impl RunRecord {
    /// Builds a run whose task order is the order of `results`.
    pub fn new(
        strategy_id: impl Into<String>,
        run_index: u32,
        seed: u64,
        results: Vec<TaskResult>,
    ) -> Result<Self, LedgerError> {
        let run = RunRecord {
            strategy_id: strategy_id.into(),
            run_index,
            seed,
            task_order: results.iter().map(|r| r.task_id.clone()).collect(),
            results,
            extra: Map::new(),
        };
        run.validate().map_err(LedgerError::InvalidRun)?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.strategy_id.is_empty() {
            return Err("empty strategy_id".into());
        }
        let ordered: BTreeSet<&str> = self.task_order.iter().map(String::as_str).collect();
        if ordered.len() != self.task_order.len() {
            return Err("task_order repeats a task id".into());
        }
        let present: BTreeSet<&str> = self.results.iter().map(|r| r.task_id.as_str()).collect();
        if present.len() != self.results.len() || ordered != present {
            return Err("task_order is not a permutation of the result task ids".into());
        }
        for r in &self.results {
            if r.calls.is_empty() {
                return Err(format!("task {} has no calls", r.task_id));
            }
            for c in &r.calls {
                c.validate()
                    .map_err(|e| format!("task {}: {e}", r.task_id))?;
            }
        }
        Ok(())
    }

    pub fn key(&self) -> (&str, u32) {
        (&self.strategy_id, self.run_index)
    }

    pub fn usage(&self) -> TokenUsage {
        self.results.iter().map(TaskResult::usage).sum()
    }

    pub fn usage_by_model(&self) -> BTreeMap<String, TokenUsage> {
        let mut table: BTreeMap<String, TokenUsage> = BTreeMap::new();
        for call in self.results.iter().flat_map(|r| r.calls.iter()) {
            *table.entry(call.model.clone()).or_default() += call.usage;
        }
        table
    }
}

/// Every run of an evaluation. Existing runs are never mutated or removed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalLedger {
    benchmark_id: String,
    schema_version: u32,
    runs: Vec<RunRecord>,
    extra: Map<String, Value>,
}

impl EvalLedger {
    pub fn new(benchmark_id: impl Into<String>) -> Self {
        EvalLedger {
            benchmark_id: benchmark_id.into(),
            schema_version: SCHEMA_VERSION,
            runs: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn benchmark_id(&self) -> &str {
        &self.benchmark_id
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn runs(&self) -> &[RunRecord] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Returns the ledger extended by `run`.
    pub fn append_run(mut self, run: RunRecord) -> Result<EvalLedger, LedgerError> {
        run.validate().map_err(LedgerError::InvalidRun)?;
        if self.runs.iter().any(|r| r.key() == run.key()) {
            return Err(LedgerError::DuplicateRun {
                strategy_id: run.strategy_id,
                run_index: run.run_index,
            });
        }
        self.runs.push(run);
        Ok(self)
    }

    /// The ledger holding the runs of `self` followed by those of `other`.
    pub fn concat(self, other: &EvalLedger) -> Result<EvalLedger, LedgerError> {
        other
            .runs
            .iter()
            .cloned()
            .try_fold(self, EvalLedger::append_run)
    }

    /// Strategy ids in order of first appearance.
    pub fn strategy_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.runs
            .iter()
            .filter(|r| seen.insert(r.strategy_id.as_str()))
            .map(|r| r.strategy_id.clone())
            .collect()
    }

    pub fn runs_of<'a>(&'a self, strategy_id: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs
            .iter()
            .filter(move |r| r.strategy_id == strategy_id)
    }

    /// Every model id referenced by any call.
    pub fn model_ids(&self) -> BTreeSet<String> {
        self.runs
            .iter()
            .flat_map(|r| r.results.iter())
            .flat_map(|t| t.calls.iter())
            .map(|c| c.model.clone())
            .collect()
    }

    pub fn total_calls(&self) -> usize {
        self.runs
            .iter()
            .flat_map(|r| r.results.iter())
            .map(|t| t.calls.len())
            .sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&preamble_line(
            &self.benchmark_id,
            self.schema_version,
            &self.extra,
        ));
        out.push('\n');
        for run in &self.runs {
            for line in run_lines(run) {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EvalLedger, LedgerError> {
        parse_lines(
            text.lines().map(|l| Ok::<_, std::io::Error>(l.to_owned())),
            Path::new("<memory>"),
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.to_owned(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<EvalLedger, LedgerError> {
        let file = File::open(path).map_err(|source| LedgerError::Io {
            path: path.to_owned(),
            source,
        })?;
        parse_lines(BufReader::new(file).lines(), path)
    }
}

/// Per-run figures used by the statistics and leaderboard code.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_index: u32,
    pub tasks: u64,
    pub successes: u64,
    pub accuracy: f64,
    pub usage: TokenUsage,
    pub usage_by_model: BTreeMap<String, TokenUsage>,
    pub wall_time_ms: u64,
}

/// Accuracy, total usage and wall time of every run of `strategy_id`.
pub fn summarize(ledger: &EvalLedger, strategy_id: &str) -> Result<Vec<RunSummary>, LedgerError> {
    let summaries: Vec<RunSummary> = ledger
        .runs_of(strategy_id)
        .map(|run| {
            let tasks = run.results.len() as u64;
            let successes = run.results.iter().filter(|r| r.success).count() as u64;
            RunSummary {
                run_index: run.run_index,
                tasks,
                successes,
                accuracy: if tasks == 0 {
                    0.0
                } else {
                    successes as f64 / tasks as f64
                },
                usage: run.usage(),
                usage_by_model: run.usage_by_model(),
                wall_time_ms: run.results.iter().map(|r| r.wall_time_ms).sum(),
            }
        })
        .collect();
    if summaries.is_empty() {
        return Err(LedgerError::UnknownStrategy(strategy_id.to_owned()));
    }
    Ok(summaries)
}

/// Appends runs to a ledger file without touching bytes already written.
pub struct LedgerWriter {
    path: PathBuf,
    keys: HashSet<(String, u32)>,
    out: BufWriter<File>,
}

impl LedgerWriter {
    /// Creates (or truncates) `path` and writes the preamble.
    pub fn create(path: &Path, benchmark_id: &str) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(
            out,
            "{}",
            preamble_line(benchmark_id, SCHEMA_VERSION, &Map::new())
        )
        .map_err(io)?;
        out.flush().map_err(io)?;
        Ok(LedgerWriter {
            path: path.to_owned(),
            keys: HashSet::new(),
            out,
        })
    }

    /// Opens an existing ledger for appending.
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let existing = EvalLedger::load(path)?;
        let keys = existing
            .runs
            .iter()
            .map(|r| (r.strategy_id.clone(), r.run_index))
            .collect();
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|source| LedgerError::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(LedgerWriter {
            path: path.to_owned(),
            keys,
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, run: &RunRecord) -> Result<(), LedgerError> {
        run.validate().map_err(LedgerError::InvalidRun)?;
        let key = (run.strategy_id.clone(), run.run_index);
        if self.keys.contains(&key) {
            return Err(LedgerError::DuplicateRun {
                strategy_id: key.0,
                run_index: key.1,
            });
        }
        let io = |source| LedgerError::Io {
            path: self.path.clone(),
            source,
        };
        for line in run_lines(run) {
            writeln!(self.out, "{line}").map_err(io)?;
        }
        self.out.flush().map_err(io)?;
        self.keys.insert(key);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PreambleLine {
    record: String,
    schema_version: u32,
    benchmark_id: String,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RunHeaderLine {
    record: String,
    strategy_id: String,
    run_index: u32,
    seed: u64,
    task_order: Vec<String>,
    task_count: usize,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Serialize)]
struct TaskLineOut<'a> {
    record: &'static str,
    #[serde(flatten)]
    result: &'a TaskResult,
}

fn preamble_line(benchmark_id: &str, schema_version: u32, extra: &Map<String, Value>) -> String {
    serde_json::to_string(&PreambleLine {
        record: "ledger".into(),
        schema_version,
        benchmark_id: benchmark_id.to_owned(),
        extra: extra.clone(),
    })
    .expect("preamble serializes")
}

fn run_lines(run: &RunRecord) -> Vec<String> {
    let header = RunHeaderLine {
        record: "run".into(),
        strategy_id: run.strategy_id.clone(),
        run_index: run.run_index,
        seed: run.seed,
        task_order: run.task_order.clone(),
        task_count: run.results.len(),
        extra: run.extra.clone(),
    };
    let mut lines = vec![serde_json::to_string(&header).expect("run header serializes")];
    lines.extend(run.results.iter().map(|r| {
        serde_json::to_string(&TaskLineOut {
            record: "task",
            result: r,
        })
        .expect("task serializes")
    }));
    lines
}

struct PendingRun {
    header: RunHeaderLine,
    line: usize,
    results: Vec<TaskResult>,
}

fn parse_lines<I>(lines: I, path: &Path) -> Result<EvalLedger, LedgerError>
where
    I: Iterator<Item = Result<String, std::io::Error>>,
{
    let schema = |line: usize, message: String| LedgerError::Schema { line, message };
    let mut ledger: Option<EvalLedger> = None;
    let mut pending: Option<PendingRun> = None;

    let finish = |ledger: &mut EvalLedger, p: PendingRun| -> Result<(), LedgerError> {
        if p.results.len() != p.header.task_count {
            return Err(schema(
                p.line,
                format!(
                    "run declares {} tasks but {} follow",
                    p.header.task_count,
                    p.results.len()
                ),
            ));
        }
        let run = RunRecord {
            strategy_id: p.header.strategy_id,
            run_index: p.header.run_index,
            seed: p.header.seed,
            task_order: p.header.task_order,
            results: p.results,
            extra: p.header.extra,
        };
        let taken = std::mem::replace(ledger, EvalLedger::new(""));
        *ledger = taken.append_run(run).map_err(|e| match e {
            LedgerError::InvalidRun(m) => schema(p.line, m),
            other => other,
        })?;
        Ok(())
    };

    for (i, line) in lines.enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| LedgerError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: Value = serde_json::from_str(&line).map_err(|e| schema(n, e.to_string()))?;
        let kind = value
            .get("record")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(n, "missing \"record\" field".into()))?
            .to_owned();
        match (kind.as_str(), ledger.as_mut()) {
            ("ledger", None) => {
                let pre: PreambleLine =
                    serde_json::from_value(value).map_err(|e| schema(n, e.to_string()))?;
                if pre.schema_version != SCHEMA_VERSION {
                    return Err(LedgerError::Version(pre.schema_version));
                }
                ledger = Some(EvalLedger {
                    benchmark_id: pre.benchmark_id,
                    schema_version: pre.schema_version,
                    runs: Vec::new(),
                    extra: pre.extra,
                });
            }
            ("ledger", Some(_)) => return Err(schema(n, "second preamble".into())),
            (_, None) => return Err(schema(n, "expected ledger preamble first".into())),
            ("run", Some(l)) => {
                if let Some(p) = pending.take() {
                    finish(l, p)?;
                }
                let header: RunHeaderLine =
                    serde_json::from_value(value).map_err(|e| schema(n, e.to_string()))?;
                pending = Some(PendingRun {
                    header,
                    line: n,
                    results: Vec::new(),
                });
            }
            ("task", Some(_)) => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| schema(n, "task line before any run header".into()))?;
                value
                    .as_object_mut()
                    .expect("checked object")
                    .remove("record");
                let result: TaskResult =
                    serde_json::from_value(value).map_err(|e| schema(n, e.to_string()))?;
                result
                    .calls
                    .iter()
                    .try_for_each(|c| c.validate())
                    .map_err(|e| schema(n, e))?;
                p.results.push(result);
            }
            (other, Some(_)) => return Err(schema(n, format!("unknown record kind {other:?}"))),
        }
    }
    let mut ledger = ledger.ok_or_else(|| schema(1, "empty ledger file".into()))?;
    if let Some(p) = pending.take() {
        finish(&mut ledger, p)?;
    }
    Ok(ledger)
}
