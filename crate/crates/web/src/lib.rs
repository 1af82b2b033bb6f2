//! Browser bindings for the leaderboard page.
//!
//! Each operation is a plain Rust function over JSON strings so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers at the bottom only convert
//! errors into JavaScript exceptions.

use agentcost::harness::Leaderboard;
use agentcost::pareto::{convex_frontier, recommend, Constraint, Recommendation, UnitRational};
use agentcost::pricing::{breakeven_tasks, Breakeven};
use agentcost::{CostBreakdown, Currency, Money, ParetoPoint, PriceSheet};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Re-costs every strategy of an exported leaderboard under `sheet_json` and
/// returns the new leaderboard, frontier included.
pub fn reprice_leaderboard(board_json: &str, sheet_json: &str) -> Result<String, String> {
    let board = Leaderboard::from_json(board_json).map_err(|e| e.to_string())?;
    let sheet = PriceSheet::from_json(sheet_json).map_err(|e| e.to_string())?;
    Ok(board.repriced(&sheet).map_err(|e| e.to_string())?.to_json())
}

#[derive(Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Advice {
    Point {
        label: String,
        expected_cost: String,
        expected_accuracy: f64,
    },
    /// Run `cheaper` with probability `p_cheaper`, otherwise `costlier`.
    Mixture {
        cheaper: String,
        costlier: String,
        p_cheaper: f64,
        p_cheaper_exact: String,
        expected_cost: String,
        expected_accuracy: f64,
    },
}

fn frontier_of(board: &Leaderboard) -> Result<agentcost::Frontier, String> {
    let currency = board.price_sheet.currency().clone();
    let points = board
        .frontier
        .iter()
        .map(|v| {
            let cost = Money::parse(&v.cost, currency.clone()).map_err(|e| e.to_string())?;
            let acc: UnitRational = v
                .accuracy_exact
                .parse()
                .map_err(|e: agentcost::pareto::ParetoError| e.to_string())?;
            Ok(ParetoPoint::new(v.label.clone(), cost, acc))
        })
        .collect::<Result<Vec<_>, String>>()?;
    convex_frontier(&points).map_err(|e| e.to_string())
}

/// Best frontier point or mixture of two neighbours. `kind` is `"budget"`
/// (maximize accuracy at mean cost ≤ value) or `"accuracy"` (cheapest way to
/// reach mean accuracy ≥ value).
pub fn recommend_json(board_json: &str, kind: &str, value: &str) -> Result<String, String> {
    let board = Leaderboard::from_json(board_json).map_err(|e| e.to_string())?;
    let frontier = frontier_of(&board)?;
    let constraint = match kind {
        "budget" => Constraint::MaxBudget(
            Money::parse(value, board.price_sheet.currency().clone()).map_err(|e| e.to_string())?,
        ),
        "accuracy" => Constraint::MinAccuracy(
            value
                .parse()
                .map_err(|e: agentcost::pareto::ParetoError| e.to_string())?,
        ),
        other => {
            return Err(format!(
                "unknown constraint {other:?}, expected \"budget\" or \"accuracy\""
            ))
        }
    };
    let rec = recommend(&frontier, &constraint).map_err(|e| e.to_string())?;
    let advice = match &rec {
        Recommendation::Point(p) => Advice::Point {
            label: p.label.clone(),
            expected_cost: p.cost.to_fixed(),
            expected_accuracy: p.accuracy.to_f64(),
        },
        Recommendation::Mixture(m) => Advice::Mixture {
            cheaper: m.a.label.clone(),
            costlier: m.b.label.clone(),
            p_cheaper: m.p.to_f64(),
            p_cheaper_exact: m.p.to_string(),
            expected_cost: rec.expected_cost().to_fixed(),
            expected_accuracy: rec.expected_accuracy().to_f64(),
        },
    };
    Ok(serde_json::to_string(&advice).expect("serializable"))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct BreakevenAnswer {
    /// Smallest task count from which `a` is no more expensive; `None` if never.
    pub tasks: Option<u64>,
    pub cost_a: Option<String>,
    pub cost_b: Option<String>,
}

/// When does strategy `a` (one-off cost `fixed_a`, then `per_task_a` per task)
/// become no more expensive than `b`? Amounts are decimal strings in USD.
pub fn breakeven_json(
    fixed_a: &str,
    per_task_a: &str,
    fixed_b: &str,
    per_task_b: &str,
) -> Result<String, String> {
    let m = |s: &str| Money::parse(s, Currency::usd()).map_err(|e| e.to_string());
    let a = CostBreakdown::new(m(fixed_a)?, m(per_task_a)?, 0).map_err(|e| e.to_string())?;
    let b = CostBreakdown::new(m(fixed_b)?, m(per_task_b)?, 0).map_err(|e| e.to_string())?;
    let answer = match breakeven_tasks(&a, &b).map_err(|e| e.to_string())? {
        Breakeven::AfterTasks(n) => BreakevenAnswer {
            tasks: Some(n),
            cost_a: Some(a.total(n).map_err(|e| e.to_string())?.to_fixed()),
            cost_b: Some(b.total(n).map_err(|e| e.to_string())?.to_fixed()),
        },
        Breakeven::Never => BreakevenAnswer {
            tasks: None,
            cost_a: None,
            cost_b: None,
        },
    };
    Ok(serde_json::to_string(&answer).expect("serializable"))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = reprice)]
pub fn reprice_js(board_json: &str, sheet_json: &str) -> Result<String, JsValue> {
    js(reprice_leaderboard(board_json, sheet_json))
}

#[wasm_bindgen(js_name = recommend)]
pub fn recommend_js(board_json: &str, kind: &str, value: &str) -> Result<String, JsValue> {
    js(recommend_json(board_json, kind, value))
}

#[wasm_bindgen(js_name = breakeven)]
pub fn breakeven_js(
    fixed_a: &str,
    per_task_a: &str,
    fixed_b: &str,
    per_task_b: &str,
) -> Result<String, JsValue> {
    js(breakeven_json(fixed_a, per_task_a, fixed_b, per_task_b))
}
