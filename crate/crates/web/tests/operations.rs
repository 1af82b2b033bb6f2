use agentcost_web::{breakeven_json, recommend_json, reprice_leaderboard};
use serde_json::Value;

const BOARD: &str = include_str!("../www/leaderboard.json");

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn sheet(scale_gpt4: &str) -> String {
    format!(
        r#"{{"currency":"USD","as_of":"2024-05-13","models":{{
            "gpt-3.5-turbo-0125":{{"input_per_token":"0.0000005","output_per_token":"0.0000015"}},
            "gpt-4-turbo-2024-04-09":{{"input_per_token":"{0}","output_per_token":"{0}"}}}}}}"#,
        scale_gpt4
    )
}

#[test]
fn repricing_keeps_accuracy_and_moves_cost() {
    let before = parse(BOARD);
    let after = parse(&reprice_leaderboard(BOARD, &sheet("0.000001")).unwrap());
    assert_eq!(after["schema"], 1);
    assert_eq!(after["price_sheet"]["as_of"], "2024-05-13");
    let strategies = |b: &Value| b["strategies"].as_array().unwrap().clone();
    for s in strategies(&after) {
        let old = strategies(&before)
            .into_iter()
            .find(|o| o["id"] == s["id"])
            .unwrap();
        assert_eq!(s["accuracy_exact"], old["accuracy_exact"]);
        assert_eq!(s["tokens"], old["tokens"]);
        let id = s["id"].as_str().unwrap();
        if id.contains("gpt-4") {
            assert_ne!(s["cost"]["total"], old["cost"]["total"], "{id}");
        } else {
            assert_eq!(s["cost"]["total"], old["cost"]["total"], "{id}");
        }
    }
}

#[test]
fn repricing_under_the_embedded_sheet_is_identity() {
    let board = parse(BOARD);
    let same = reprice_leaderboard(BOARD, &board["price_sheet"].to_string()).unwrap();
    assert_eq!(parse(&same), board);
}

#[test]
fn repricing_rejects_missing_models_and_bad_schema() {
    let partial = r#"{"currency":"USD","as_of":"2024-05-13","models":{"gpt-3.5-turbo-0125":{"input_per_token":"0","output_per_token":"0"}}}"#;
    let e = reprice_leaderboard(BOARD, partial).unwrap_err();
    assert!(e.contains("gpt-4-turbo-2024-04-09"), "{e}");
    let mut old = parse(BOARD);
    old["schema"] = 2.into();
    assert!(reprice_leaderboard(&old.to_string(), partial).is_err());
}

#[test]
fn recommend_at_vertices_and_between() {
    let board = parse(BOARD);
    let frontier = board["frontier"].as_array().unwrap();
    let first = &frontier[0];
    let last = frontier.last().unwrap();

    let at_first =
        parse(&recommend_json(BOARD, "budget", first["cost"].as_str().unwrap()).unwrap());
    assert_eq!(at_first["kind"], "point");
    assert_eq!(at_first["label"], first["label"]);

    let rich = parse(&recommend_json(BOARD, "budget", "1000").unwrap());
    assert_eq!(rich["label"], last["label"]);

    if frontier.len() >= 2 {
        let (a, b) = (&frontier[0], &frontier[1]);
        let ca: f64 = a["cost"].as_str().unwrap().parse().unwrap();
        let cb: f64 = b["cost"].as_str().unwrap().parse().unwrap();
        let mid = format!("{:.6}", (ca + cb) / 2.0);
        let m = parse(&recommend_json(BOARD, "budget", &mid).unwrap());
        assert_eq!(m["kind"], "mixture");
        assert_eq!(m["cheaper"], a["label"]);
        assert_eq!(m["costlier"], b["label"]);
        let p = m["p_cheaper"].as_f64().unwrap();
        assert!((p - 0.5).abs() < 1e-3, "{p}");
        let acc = m["expected_accuracy"].as_f64().unwrap();
        let (aa, ab) = (
            a["accuracy"].as_f64().unwrap(),
            b["accuracy"].as_f64().unwrap(),
        );
        assert!((acc - (p * aa + (1.0 - p) * ab)).abs() < 1e-9);
    }

    let floor = parse(
        &recommend_json(
            BOARD,
            "accuracy",
            first["accuracy_exact"].as_str().unwrap(),
        )
        .unwrap(),
    );
    assert_eq!(floor["label"], first["label"]);
}

#[test]
fn recommend_reports_infeasible_and_bad_input() {
    assert!(recommend_json(BOARD, "budget", "0").is_err());
    assert!(recommend_json(BOARD, "accuracy", "1").is_err());
    assert!(recommend_json(BOARD, "latency", "1")
        .unwrap_err()
        .contains("latency"));
    assert!(recommend_json(BOARD, "budget", "cheap").is_err());
}

#[test]
fn breakeven_matches_hand_count() {
    let r = parse(&breakeven_json("2.714", "0.00174", "0.029", "0.00384").unwrap());
    assert_eq!(r["tasks"], 1279);
    assert_eq!(r["cost_a"], "4.939460");
    assert_eq!(r["cost_b"], "4.940360");

    let never = parse(&breakeven_json("1", "0.01", "0", "0.01").unwrap());
    assert!(never["tasks"].is_null());
    let already = parse(&breakeven_json("0", "0.01", "1", "0.02").unwrap());
    assert_eq!(already["tasks"], 0);
    assert!(breakeven_json("x", "0", "0", "0").is_err());
}
