//! Leaderboard JSON, schema 1.
//!
//! Every dollar figure is derived from the per-run token counts and the
//! embedded price sheet, so a leaderboard can be repriced or re-verified
//! without the ledger it came from.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ledger::EvalLedger;
use crate::pareto::{convex_frontier, ParetoPoint, UnitRational};
use crate::pricing::{Money, PriceSheet, TokenUsage};
use crate::stats::{describe, summarize_strategy, SummaryStat, DEFAULT_CONFIDENCE};

pub const LEADERBOARD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub input: u64,
    pub output: u64,
}

impl From<TokenUsage> for TokenCount {
    fn from(u: TokenUsage) -> Self {
        TokenCount {
            input: u.input_tokens,
            output: u.output_tokens,
        }
    }
}

impl From<TokenCount> for TokenUsage {
    fn from(t: TokenCount) -> Self {
        TokenUsage::new(t.input, t.output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Two-sided 95% t interval; absent for a single run.
    pub ci: Option<(f64, f64)>,
    pub n: usize,
}

impl From<&SummaryStat> for StatBlock {
    fn from(s: &SummaryStat) -> Self {
        StatBlock {
            mean: s.mean,
            min: s.min,
            max: s.max,
            ci: s.interval(),
            n: s.n,
        }
    }
}

/// Costs of one strategy as six-decimal strings. `mean` and `total` cover all
/// runs; `min` and `max` are single-run totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBlock {
    pub mean: String,
    pub min: String,
    pub max: String,
    pub total: String,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_index: u32,
    pub seed: u64,
    pub tasks: u64,
    pub successes: u64,
    pub cost: String,
    pub wall_time_ms: u64,
    pub tokens: BTreeMap<String, TokenCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub id: String,
    pub runs: u32,
    pub accuracy: StatBlock,
    /// Mean of the per-run accuracies as a reduced fraction.
    pub accuracy_exact: String,
    pub cost: CostBlock,
    pub wall_time_ms: StatBlock,
    pub tokens: BTreeMap<String, TokenCount>,
    pub per_run: Vec<RunRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierVertex {
    pub label: String,
    pub cost: String,
    pub accuracy: f64,
    pub accuracy_exact: String,
    pub accuracy_ci: Option<(f64, f64)>,
    pub cost_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub schema: u32,
    pub benchmark_id: String,
    pub price_sheet: PriceSheet,
    /// Highest mean accuracy first; ties by id.
    pub strategies: Vec<StrategyRow>,
    /// Convex frontier over the strategies' mean (cost, accuracy), cheapest first.
    pub frontier: Vec<FrontierVertex>,
}

/// What the leaderboard keeps of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunAggregate {
    pub run_index: u32,
    pub seed: u64,
    pub tasks: u64,
    pub successes: u64,
    pub tokens: BTreeMap<String, TokenUsage>,
    pub wall_time_ms: u64,
}

pub fn aggregates_from_ledger(ledger: &EvalLedger) -> BTreeMap<String, Vec<RunAggregate>> {
    let mut out: BTreeMap<String, Vec<RunAggregate>> = BTreeMap::new();
    for run in ledger.runs() {
        out.entry(run.strategy_id.clone())
            .or_default()
            .push(RunAggregate {
                run_index: run.run_index,
                seed: run.seed,
                tasks: run.results.len() as u64,
                successes: run.results.iter().filter(|r| r.success).count() as u64,
                tokens: run.usage_by_model(),
                wall_time_ms: run.results.iter().map(|r| r.wall_time_ms).sum(),
            });
    }
    out
}

pub fn build_leaderboard(
    ledger: &EvalLedger,
    sheet: &PriceSheet,
) -> Result<Leaderboard, HarnessError> {
    leaderboard_from_aggregates(
        ledger.benchmark_id(),
        sheet,
        &aggregates_from_ledger(ledger),
    )
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn add_usage(into: &mut BTreeMap<String, TokenUsage>, from: &BTreeMap<String, TokenUsage>) {
    for (m, u) in from {
        let e = into.entry(m.clone()).or_default();
        *e = TokenUsage::new(
            e.input_tokens + u.input_tokens,
            e.output_tokens + u.output_tokens,
        );
    }
}

fn counts(usage: &BTreeMap<String, TokenUsage>) -> BTreeMap<String, TokenCount> {
    usage
        .iter()
        .map(|(m, u)| (m.clone(), TokenCount::from(*u)))
        .collect()
}

struct Row {
    out: StrategyRow,
    total: Money,
    accuracy: BigRational,
}

fn build_row(id: &str, runs: &[RunAggregate], sheet: &PriceSheet) -> Result<Row, HarnessError> {
    let data = |m: String| HarnessError::Data(format!("strategy {id}: {m}"));
    if runs.is_empty() {
        return Err(data("no runs".into()));
    }
    let mut per_run = Vec::with_capacity(runs.len());
    let mut pairs = Vec::with_capacity(runs.len());
    let mut tokens = BTreeMap::new();
    let mut acc_sum = BigRational::zero();
    for r in runs {
        if r.successes > r.tasks || r.tasks == 0 {
            return Err(data(format!(
                "run {} has {} of {} tasks passing",
                r.run_index, r.successes, r.tasks
            )));
        }
        let cost = sheet.exact_cost_of_table(&r.tokens)?;
        acc_sum += BigRational::new(BigInt::from(r.successes), BigInt::from(r.tasks));
        pairs.push((r.successes as f64 / r.tasks as f64, cost.clone()));
        add_usage(&mut tokens, &r.tokens);
        per_run.push(RunRow {
            run_index: r.run_index,
            seed: r.seed,
            tasks: r.tasks,
            successes: r.successes,
            cost: cost.to_fixed(),
            wall_time_ms: r.wall_time_ms,
            tokens: counts(&r.tokens),
        });
    }
    let n = runs.len() as u64;
    let accuracy = acc_sum / BigRational::from_integer(BigInt::from(n));
    let exact = UnitRational::new(accuracy.clone()).map_err(|e| data(e.to_string()))?;
    let (mut acc_stat, cost_summary) =
        summarize_strategy(&pairs).map_err(|e| data(e.to_string()))?;
    acc_stat.mean = exact.to_f64();
    let walls: Vec<f64> = runs.iter().map(|r| r.wall_time_ms as f64).collect();
    let wall = describe(&walls, DEFAULT_CONFIDENCE).map_err(|e| data(e.to_string()))?;
    let total = sheet.exact_cost_of_table(&tokens)?;
    Ok(Row {
        out: StrategyRow {
            id: id.to_owned(),
            runs: runs.len() as u32,
            accuracy: StatBlock::from(&acc_stat),
            accuracy_exact: exact.to_string(),
            cost: CostBlock {
                mean: total.div_count(n)?.to_fixed(),
                min: cost_summary.min.to_fixed(),
                max: cost_summary.max.to_fixed(),
                total: total.to_fixed(),
                ci: cost_summary.stat.interval(),
            },
            wall_time_ms: StatBlock::from(&wall),
            tokens: counts(&tokens),
            per_run,
        },
        total,
        accuracy,
    })
}

/// Builds a leaderboard from per-run aggregates priced under `sheet`.
///
/// The frontier is computed on run totals scaled to a common run count, so
/// membership is decided in exact arithmetic and does not move when every
/// price is multiplied by the same factor.
pub fn leaderboard_from_aggregates(
    benchmark_id: &str,
    sheet: &PriceSheet,
    aggregates: &BTreeMap<String, Vec<RunAggregate>>,
) -> Result<Leaderboard, HarnessError> {
    let models = aggregates
        .values()
        .flatten()
        .flat_map(|r| r.tokens.keys().map(String::as_str));
    let missing = sheet.missing_models(models);
    if !missing.is_empty() {
        return Err(crate::pricing::PricingError::UnknownModel(missing).into());
    }
    let mut rows = aggregates
        .iter()
        .map(|(id, runs)| build_row(id, runs, sheet))
        .collect::<Result<Vec<Row>, HarnessError>>()?;
    rows.sort_by(|a, b| {
        b.accuracy
            .cmp(&a.accuracy)
            .then_with(|| a.out.id.cmp(&b.out.id))
    });

    let frontier = if rows.is_empty() {
        Vec::new()
    } else {
        let lcm = rows
            .iter()
            .map(|r| r.out.runs as u64)
            .fold(1, |l, n| l / gcd(l, n) * n);
        let points = rows
            .iter()
            .map(|r| {
                let scaled = r.total.scale(Decimal::from(lcm / r.out.runs as u64))?;
                let acc = UnitRational::new(r.accuracy.clone()).expect("checked in build_row");
                Ok(ParetoPoint::new(r.out.id.clone(), scaled, acc))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let hull = convex_frontier(&points).map_err(|e| HarnessError::Data(e.to_string()))?;
        hull.labels()
            .into_iter()
            .map(|label| {
                let row = &rows
                    .iter()
                    .find(|r| r.out.id == label)
                    .expect("label from rows")
                    .out;
                FrontierVertex {
                    label: row.id.clone(),
                    cost: row.cost.mean.clone(),
                    accuracy: row.accuracy.mean,
                    accuracy_exact: row.accuracy_exact.clone(),
                    accuracy_ci: row.accuracy.ci,
                    cost_ci: row.cost.ci,
                }
            })
            .collect()
    };

    Ok(Leaderboard {
        schema: LEADERBOARD_SCHEMA,
        benchmark_id: benchmark_id.to_owned(),
        price_sheet: sheet.clone(),
        strategies: rows.into_iter().map(|r| r.out).collect(),
        frontier,
    })
}

impl Leaderboard {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| HarnessError::Data(format!("leaderboard: {e}")))?;
        match v.get("schema").and_then(serde_json::Value::as_u64) {
            Some(s) if s == LEADERBOARD_SCHEMA as u64 => {}
            other => {
                return Err(HarnessError::Data(format!(
                    "leaderboard schema {other:?} is not supported (expected {LEADERBOARD_SCHEMA})"
                )))
            }
        }
        serde_json::from_value(v).map_err(|e| HarnessError::Data(format!("leaderboard: {e}")))
    }

    /// The per-run aggregates embedded in the rows.
    pub fn aggregates(&self) -> BTreeMap<String, Vec<RunAggregate>> {
        self.strategies
            .iter()
            .map(|s| {
                let runs = s
                    .per_run
                    .iter()
                    .map(|r| RunAggregate {
                        run_index: r.run_index,
                        seed: r.seed,
                        tasks: r.tasks,
                        successes: r.successes,
                        tokens: r
                            .tokens
                            .iter()
                            .map(|(m, t)| (m.clone(), TokenUsage::from(*t)))
                            .collect(),
                        wall_time_ms: r.wall_time_ms,
                    })
                    .collect();
                (s.id.clone(), runs)
            })
            .collect()
    }

    /// The same leaderboard priced under `sheet`.
    pub fn repriced(&self, sheet: &PriceSheet) -> Result<Leaderboard, HarnessError> {
        leaderboard_from_aggregates(&self.benchmark_id, sheet, &self.aggregates())
    }

    /// Recomputes every figure from the embedded token counts and sheet and
    /// reports the first strategy whose displayed values differ.
    pub fn verify(&self) -> Result<(), HarnessError> {
        let again = self.repriced(&self.price_sheet)?;
        if again == *self {
            return Ok(());
        }
        for (shown, fresh) in self.strategies.iter().zip(&again.strategies) {
            if shown != fresh {
                return Err(HarnessError::Data(format!(
                    "strategy {}: displayed figures do not match its token counts",
                    shown.id
                )));
            }
        }
        Err(HarnessError::Data(
            "leaderboard ordering or frontier does not match its rows".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{CallPurpose, CallRecord, RunRecord, TaskResult};
    use crate::pricing::ModelPrice;

    fn sheet() -> PriceSheet {
        PriceSheet::openai_april_2024()
            .with_price(
                "m",
                ModelPrice::per_token(Decimal::new(1, 2), Decimal::new(3, 2)),
            )
            .unwrap()
    }

    /// One run with `tasks` tasks, `passes` passing; the first call carries all tokens.
    fn run(id: &str, idx: u32, tasks: u64, passes: u64, input: u64, output: u64) -> RunRecord {
        let results = (0..tasks)
            .map(|t| {
                let usage = if t == 0 {
                    TokenUsage::new(input, output)
                } else {
                    TokenUsage::ZERO
                };
                let call = CallRecord::new("m", usage, 0.0, 0, CallPurpose::Generate);
                TaskResult::new(format!("t{t}"), t < passes, t < passes, vec![call])
            })
            .collect();
        RunRecord::new(id, idx, idx as u64, results).unwrap()
    }

    fn ledger(runs: Vec<RunRecord>) -> EvalLedger {
        runs.into_iter()
            .fold(EvalLedger::new("b"), |l, r| l.append_run(r).unwrap())
    }

    #[test]
    fn one_strategy_one_vertex() {
        let lb = build_leaderboard(&ledger(vec![run("a", 0, 4, 3, 100, 10)]), &sheet()).unwrap();
        assert_eq!(lb.strategies.len(), 1);
        assert_eq!(lb.frontier.len(), 1);
        let row = &lb.strategies[0];
        assert_eq!(row.accuracy_exact, "3/4");
        // 100 × 0.01 + 10 × 0.03
        assert_eq!(row.cost.mean, "1.300000");
        assert_eq!(row.accuracy.ci, None);
        assert_eq!(
            row.tokens["m"],
            TokenCount {
                input: 100,
                output: 10
            }
        );
        lb.verify().unwrap();
    }

    #[test]
    fn means_over_runs_and_ordering() {
        let l = ledger(vec![
            run("a", 0, 4, 1, 10, 0),
            run("a", 1, 4, 2, 20, 0),
            run("b", 0, 3, 2, 1000, 0),
        ]);
        let lb = build_leaderboard(&l, &sheet()).unwrap();
        assert_eq!(lb.strategies[0].id, "b");
        assert_eq!(lb.strategies[1].accuracy_exact, "3/8");
        assert_eq!(lb.strategies[1].cost.mean, "0.150000");
        assert_eq!(lb.strategies[1].cost.min, "0.100000");
        assert_eq!(lb.strategies[1].cost.max, "0.200000");
        assert_eq!(lb.strategies[1].cost.total, "0.300000");
        assert_eq!(lb.strategies[1].accuracy.n, 2);
        let labels: Vec<&str> = lb.frontier.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(labels, ["a", "b"]);
    }

    #[test]
    fn doubled_sheet_doubles_costs_and_keeps_frontier() {
        let l = ledger(vec![
            run("a", 0, 10, 5, 100, 0),
            run("b", 0, 10, 7, 300, 0),
            run("c", 0, 10, 8, 800, 0),
            run("d", 0, 10, 9, 900, 10),
        ]);
        let lb = build_leaderboard(&l, &sheet()).unwrap();
        let doubled = lb.repriced(&sheet().scaled(Decimal::TWO).unwrap()).unwrap();
        for (a, b) in lb.strategies.iter().zip(&doubled.strategies) {
            let x: Decimal = a.cost.total.parse().unwrap();
            let y: Decimal = b.cost.total.parse().unwrap();
            assert_eq!(x * Decimal::TWO, y);
        }
        let labels = |lb: &Leaderboard| {
            lb.frontier
                .iter()
                .map(|v| v.label.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(labels(&lb), labels(&doubled));
        doubled.verify().unwrap();
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let lb = build_leaderboard(
            &ledger(vec![run("a", 0, 2, 1, 5, 5), run("a", 1, 2, 2, 5, 6)]),
            &sheet(),
        )
        .unwrap();
        let text = lb.to_json();
        assert_eq!(Leaderboard::from_json(&text).unwrap(), lb);
        assert_eq!(text, Leaderboard::from_json(&text).unwrap().to_json());
        let bumped = text.replacen("\"schema\": 1", "\"schema\": 2", 1);
        assert!(Leaderboard::from_json(&bumped).is_err());
    }

    #[test]
    fn tampered_cost_fails_verification() {
        let mut lb = build_leaderboard(&ledger(vec![run("a", 0, 2, 1, 5, 5)]), &sheet()).unwrap();
        lb.strategies[0].cost.mean = "0.000001".into();
        let e = lb.verify().unwrap_err();
        assert!(e.to_string().contains("strategy a"), "{e}");
    }

    #[test]
    fn unpriced_model_is_reported() {
        let l = ledger(vec![run("a", 0, 1, 1, 5, 5)]);
        let e = build_leaderboard(&l, &PriceSheet::openai_april_2024()).unwrap_err();
        assert_eq!(e.exit_code(), 65);
        assert!(e.to_string().contains('m'));
    }
}
