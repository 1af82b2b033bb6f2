//! Benchmark manifests and holdout linting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::provider::{parse_candidate, SimTaskSpec};
use crate::strategies::{Task, Verifier, VerifierKind, Verifiers};

/// Intended scope of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generality {
    DistributionSpecific,
    TaskSpecific,
    DomainGeneral,
    FullyGeneral,
}

impl Generality {
    pub const ALL: [Generality; 4] = [
        Generality::DistributionSpecific,
        Generality::TaskSpecific,
        Generality::DomainGeneral,
        Generality::FullyGeneral,
    ];

    /// The weakest holdout adequate for this level.
    pub fn required_holdout(self) -> Holdout {
        match self {
            Generality::DistributionSpecific => Holdout::InDistributionSamples,
            Generality::TaskSpecific => Holdout::OutOfDistributionSamples,
            Generality::DomainGeneral => Holdout::Tasks,
            Generality::FullyGeneral => Holdout::Domains,
        }
    }
}

impl fmt::Display for Generality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generality::DistributionSpecific => "distribution-specific",
            Generality::TaskSpecific => "task-specific",
            Generality::DomainGeneral => "domain-general",
            Generality::FullyGeneral => "fully general",
        })
    }
}

/// Withheld evaluation data, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holdout {
    None,
    InDistributionSamples,
    OutOfDistributionSamples,
    Tasks,
    Domains,
}

impl Holdout {
    pub const ALL: [Holdout; 5] = [
        Holdout::None,
        Holdout::InDistributionSamples,
        Holdout::OutOfDistributionSamples,
        Holdout::Tasks,
        Holdout::Domains,
    ];
}

impl fmt::Display for Holdout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Holdout::None => "none",
            Holdout::InDistributionSamples => "in-distribution samples",
            Holdout::OutOfDistributionSamples => "out-of-distribution samples",
            Holdout::Tasks => "tasks",
            Holdout::Domains => "domains",
        })
    }
}

/// A task answered by the simulated provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTaskEntry {
    pub task_id: String,
    pub difficulty: f64,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

/// A task with a literal prompt, passed when the candidate contains `expected`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTask {
    pub task_id: String,
    pub prompt: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    Sim(SimTaskEntry),
    External(ExternalTask),
}

impl TaskEntry {
    pub fn id(&self) -> &str {
        match self {
            TaskEntry::Sim(t) => &t.task_id,
            TaskEntry::External(t) => &t.task_id,
        }
    }

    pub fn to_task(&self) -> Task {
        match self {
            TaskEntry::Sim(t) => Task::new(
                t.task_id.clone(),
                t.prompt
                    .clone()
                    .unwrap_or_else(|| format!("Solve task {}.", t.task_id)),
            ),
            TaskEntry::External(t) => Task::new(t.task_id.clone(), t.prompt.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub benchmark_id: String,
    pub tasks: Vec<TaskEntry>,
    pub generality: Generality,
    pub holdout: Holdout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_note: Option<String>,
}

impl BenchmarkManifest {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let m: BenchmarkManifest =
            serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.tasks.is_empty() {
            return Err(HarnessError::Data("manifest has no tasks".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tasks {
            if t.id().is_empty() || !seen.insert(t.id()) {
                return Err(HarnessError::Data(format!(
                    "task id {:?} is empty or repeated",
                    t.id()
                )));
            }
            if let TaskEntry::Sim(s) = t {
                if !(0.0..=1.0).contains(&s.difficulty) {
                    return Err(HarnessError::Data(format!(
                        "task {:?}: difficulty outside [0, 1]",
                        s.task_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.tasks.iter().map(TaskEntry::to_task).collect()
    }

    pub fn sim_tasks(&self) -> Vec<SimTaskSpec> {
        self.tasks
            .iter()
            .filter_map(|t| match t {
                TaskEntry::Sim(s) => Some(SimTaskSpec::new(
                    s.task_id.clone(),
                    s.difficulty,
                    s.prompt_tokens,
                )),
                TaskEntry::External(_) => None,
            })
            .collect()
    }

    /// Substring checks for external tasks, simulated verdicts for the rest.
    pub fn verifiers(&self) -> Verifiers {
        let expected: BTreeMap<String, String> = self
            .tasks
            .iter()
            .filter_map(|t| match t {
                TaskEntry::External(e) => Some((e.task_id.clone(), e.expected.clone())),
                TaskEntry::Sim(_) => None,
            })
            .collect();
        let expected = Arc::new(expected);
        let make = |kind| -> Arc<dyn Verifier> {
            Arc::new(ManifestVerifier {
                kind,
                expected: expected.clone(),
            })
        };
        Verifiers::new(
            make(VerifierKind::ExampleTests),
            make(VerifierKind::HiddenTests),
        )
        .expect("kinds match")
    }
}

struct ManifestVerifier {
    kind: VerifierKind,
    expected: Arc<BTreeMap<String, String>>,
}

impl Verifier for ManifestVerifier {
    fn kind(&self) -> VerifierKind {
        self.kind
    }

    fn check(&self, task_id: &str, candidate: &str) -> bool {
        if let Some(e) = self.expected.get(task_id) {
            return candidate.contains(e.as_str());
        }
        match parse_candidate(candidate) {
            Some((t, example, hidden)) if t == task_id => match self.kind {
                VerifierKind::ExampleTests => example,
                VerifierKind::HiddenTests => hidden,
            },
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LintVerdict {
    Pass,
    Warn,
    Fail,
}

impl LintVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            LintVerdict::Pass => 0,
            LintVerdict::Warn => 1,
            LintVerdict::Fail => 2,
        }
    }
}

impl fmt::Display for LintVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LintVerdict::Pass => "PASS",
            LintVerdict::Warn => "WARN",
            LintVerdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub verdict: LintVerdict,
    pub generality: Generality,
    pub holdout: Holdout,
    pub required: Holdout,
    pub message: String,
}

/// Holdout adequacy of one (generality, holdout) cell. A declared intent to
/// build the missing holdout turns a failure into a warning.
pub fn lint_levels(
    generality: Generality,
    holdout: Holdout,
    intent_note: Option<&str>,
) -> LintReport {
    let required = generality.required_holdout();
    let has_intent = intent_note.is_some_and(|n| !n.trim().is_empty());
    let (verdict, message) = if holdout >= required {
        (
            LintVerdict::Pass,
            format!("{generality} benchmark holds out {holdout}"),
        )
    } else if has_intent {
        (
            LintVerdict::Warn,
            format!("{generality} benchmark requires a holdout of {required}; intent declared, holdout is {holdout}"),
        )
    } else {
        (
            LintVerdict::Fail,
            format!("{generality} benchmark requires a holdout of {required}, found {holdout}"),
        )
    };
    LintReport {
        verdict,
        generality,
        holdout,
        required,
        message,
    }
}

pub fn lint_manifest(manifest: &BenchmarkManifest) -> LintReport {
    lint_levels(
        manifest.generality,
        manifest.holdout,
        manifest.intent_note.as_deref(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_ordering() {
        let mut sorted = Holdout::ALL;
        sorted.sort();
        assert_eq!(sorted, Holdout::ALL);
        assert!(Holdout::Tasks < Holdout::Domains);
    }

    #[test]
    fn lint_examples() {
        assert_eq!(
            lint_levels(Generality::DomainGeneral, Holdout::Tasks, None).verdict,
            LintVerdict::Pass
        );
        let r = lint_levels(Generality::TaskSpecific, Holdout::None, None);
        assert_eq!(r.verdict, LintVerdict::Fail);
        assert!(
            r.message.contains("out-of-distribution samples"),
            "{}",
            r.message
        );
        assert_eq!(
            lint_levels(Generality::FullyGeneral, Holdout::Tasks, None).verdict,
            LintVerdict::Fail
        );
        assert_eq!(
            lint_levels(
                Generality::TaskSpecific,
                Holdout::None,
                Some("held-out split planned")
            )
            .verdict,
            LintVerdict::Warn
        );
        assert_eq!(
            lint_levels(Generality::TaskSpecific, Holdout::None, Some("  ")).verdict,
            LintVerdict::Fail
        );
    }

    #[test]
    fn lint_grid_golden() {
        // Rows follow Generality::ALL, columns Holdout::ALL.
        const GRID: [&str; 4] = ["FPPPP", "FFPPP", "FFFPP", "FFFFP"];
        for (g, row) in Generality::ALL.iter().zip(GRID) {
            for (h, cell) in Holdout::ALL.iter().zip(row.chars()) {
                let plain = lint_levels(*g, *h, None).verdict;
                let intent = lint_levels(*g, *h, Some("will build it")).verdict;
                let (want, want_intent) = match cell {
                    'P' => (LintVerdict::Pass, LintVerdict::Pass),
                    _ => (LintVerdict::Fail, LintVerdict::Warn),
                };
                assert_eq!((plain, intent), (want, want_intent), "{g} / {h}");
            }
        }
    }

    #[test]
    fn manifest_parsing() {
        let m = BenchmarkManifest::from_json(
            r#"{"benchmark_id":"b","generality":"domain_general","holdout":"tasks",
                "tasks":[{"task_id":"s","difficulty":0.5,"prompt_tokens":10},
                         {"task_id":"e","prompt":"2+2?","expected":"4"}]}"#,
        )
        .unwrap();
        assert!(matches!(m.tasks[0], TaskEntry::Sim(_)));
        assert!(matches!(m.tasks[1], TaskEntry::External(_)));
        assert_eq!(m.sim_tasks().len(), 1);
        assert_eq!(lint_manifest(&m).verdict, LintVerdict::Pass);
        let v = m.verifiers();
        assert!(v.hidden().check("e", "it is 4"));
        assert!(v
            .example()
            .check("s", "sim-candidate task=s model=m example=1 hidden=0"));
        assert!(!v
            .hidden()
            .check("s", "sim-candidate task=s model=m example=1 hidden=0"));
    }

    #[test]
    fn manifest_rejects_bad_tasks() {
        let base = |tasks: &str| {
            format!(
                r#"{{"benchmark_id":"b","generality":"task_specific","holdout":"none","tasks":{tasks}}}"#
            )
        };
        assert!(BenchmarkManifest::from_json(&base("[]")).is_err());
        assert!(BenchmarkManifest::from_json(&base(
            r#"[{"task_id":"a","difficulty":0.1},{"task_id":"a","difficulty":0.2}]"#
        ))
        .is_err());
        assert!(
            BenchmarkManifest::from_json(&base(r#"[{"task_id":"a","difficulty":1.5}]"#)).is_err()
        );
        assert!(BenchmarkManifest::from_json(&base(r#"[{"task_id":"a"}]"#)).is_err());
    }
}
