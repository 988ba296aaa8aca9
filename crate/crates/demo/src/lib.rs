//! String-in, string-out endpoints for the browser playground.
//!
//! Every endpoint takes a JSON request and returns a JSON response, so the
//! page needs nothing beyond JSON.parse and JSON.stringify. The same
//! functions compile natively, where the unit tests exercise them, and to
//! wasm32, where wasm-bindgen exports them to the page.

use apiselect::combiner::{apply_threshold, combine_scores};
use apiselect::selector::{
    estimate_p_hat, offline_strategy, run_online, OnlinePolicy, DELTA_MAX, DELTA_MIN,
};
use apiselect::synth::synth_instance_pair;
use apiselect::types::ScoredLabelSet;
use serde::{Deserialize, Serialize};

#[cfg(target_arch = "wasm32")]
use wasm_bindgen::prelude::wasm_bindgen;

/// Row caps keep a misclick from freezing the browser tab.
const MAX_ITEMS: usize = 20_000;
const MIN_ITEMS: usize = 10;
const MAX_BUDGET: f64 = 10.0;
const MAX_CURVE_POINTS: usize = 40;
const MAX_LABELS: usize = 50;
/// Longest spend trace the page is asked to draw.
const TRACE_POINTS: usize = 400;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let body = match result {
        Ok(value) => serde_json::to_string(&value),
        Err(msg) => serde_json::to_string(&serde_json::json!({ "error": msg })),
    };
    body.unwrap_or_else(|e| format!("{{\"error\":\"encoding failed: {e}\"}}"))
}

#[derive(Deserialize)]
struct CombineRequest {
    base: Vec<(String, f64)>,
    addon: Vec<(String, f64)>,
    w: f64,
    theta: f64,
}

#[derive(Serialize)]
struct CombineResponse {
    scores: Vec<(String, f64)>,
    kept: Vec<String>,
}

fn checked_labels(side: &str, entries: &[(String, f64)]) -> Result<ScoredLabelSet, String> {
    if entries.len() > MAX_LABELS {
        return Err(format!("{side} lists more than {MAX_LABELS} labels"));
    }
    for (label, score) in entries {
        if label.is_empty() {
            return Err(format!("{side} contains an empty label"));
        }
        if !(score.is_finite() && (0.0..=1.0).contains(score)) {
            return Err(format!("{side} score {score} for {label} is not in [0, 1]"));
        }
    }
    Ok(ScoredLabelSet::from_entries(
        entries.iter().map(|(l, s)| (l.clone(), *s)),
    ))
}

fn combine_inner(request: &str) -> Result<CombineResponse, String> {
    let req: CombineRequest =
        serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    if !(req.w.is_finite() && (0.0..=1.0).contains(&req.w)) {
        return Err(format!("weight {} is not in [0, 1]", req.w));
    }
    if !(req.theta.is_finite() && (0.0..=1.0).contains(&req.theta)) {
        return Err(format!("threshold {} is not in [0, 1]", req.theta));
    }
    let base = checked_labels("base output", &req.base)?;
    let addon = checked_labels("add-on output", &req.addon)?;
    let blended = combine_scores(&base, &addon, req.w);
    let kept = apply_threshold(&blended, req.theta);
    Ok(CombineResponse {
        scores: blended.iter().map(|(l, s)| (l.to_string(), s)).collect(),
        kept: kept.into_iter().collect(),
    })
}

/// Blends two scored label sets and applies the confidence threshold.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn combine_labels(request: &str) -> String {
    respond(combine_inner(request))
}

#[derive(Deserialize)]
struct CurveRequest {
    seed: u64,
    n: usize,
    budgets: Vec<f64>,
}

#[derive(Serialize)]
struct CurvePoint {
    budget: f64,
    offline_accuracy: f64,
    online_accuracy: f64,
    online_spend: f64,
}

#[derive(Serialize)]
struct CurveResponse {
    costs: Vec<f64>,
    points: Vec<CurvePoint>,
}

fn check_shape(n: usize, budget: f64) -> Result<(), String> {
    if !(MIN_ITEMS..=MAX_ITEMS).contains(&n) {
        return Err(format!("item count {n} is outside {MIN_ITEMS}..={MAX_ITEMS}"));
    }
    if !(budget.is_finite() && (0.0..=MAX_BUDGET).contains(&budget)) {
        return Err(format!("budget {budget} is outside [0, {MAX_BUDGET}]"));
    }
    Ok(())
}

fn buffer_for(n: usize) -> f64 {
    ((n as f64).ln() / n as f64).clamp(DELTA_MIN, DELTA_MAX)
}

/// Train-stream price estimate replayed on a fresh evaluation stream.
fn replay_point(seed: u64, n: usize, budget: f64) -> Result<(Vec<usize>, f64, f64, f64), String> {
    let (train, eval) = synth_instance_pair(n, n, budget, seed).map_err(|e| e.to_string())?;
    let delta = buffer_for(n);
    let p_hat = estimate_p_hat(&train, budget, delta).map_err(|e| e.to_string())?;
    let costs = eval.costs();
    let mut policy =
        OnlinePolicy::new(p_hat, delta, costs.base()).map_err(|e| e.to_string())?;
    let picks = run_online(
        eval.rows().iter().cloned().enumerate(),
        &mut policy,
        n,
        budget,
        costs,
    )
    .map_err(|e| e.to_string())?;
    let assignments: Vec<usize> = picks.into_iter().map(|(_, k)| k).collect();
    let accuracy = eval.mean_accuracy(&assignments);
    let spend: f64 = assignments.iter().map(|&k| costs.hatted_cost(k)).sum();
    Ok((assignments, accuracy, spend / n as f64, p_hat))
}

fn curve_inner(request: &str) -> Result<CurveResponse, String> {
    let req: CurveRequest =
        serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    if req.budgets.is_empty() || req.budgets.len() > MAX_CURVE_POINTS {
        return Err(format!("need 1 to {MAX_CURVE_POINTS} budgets"));
    }
    let mut budgets = req.budgets.clone();
    for b in &budgets {
        check_shape(req.n, *b)?;
    }
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    let mut points = Vec::with_capacity(budgets.len());
    let mut costs = Vec::new();
    for budget in budgets {
        let (_, online_accuracy, online_spend, _) = replay_point(req.seed, req.n, budget)?;
        let (_, eval) = synth_instance_pair(req.n, req.n, budget, req.seed)
            .map_err(|e| e.to_string())?;
        let (offline_assignments, _) = offline_strategy(&eval).map_err(|e| e.to_string())?;
        let offline_accuracy = eval.mean_accuracy(&offline_assignments);
        costs = eval.costs().costs().to_vec();
        points.push(CurvePoint {
            budget,
            offline_accuracy,
            online_accuracy,
            online_spend,
        });
    }
    Ok(CurveResponse { costs, points })
}

/// Accuracy against budget for the online policy and the hindsight optimum,
/// on seeded synthetic streams.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn budget_curve(request: &str) -> String {
    respond(curve_inner(request))
}

#[derive(Deserialize)]
struct TraceRequest {
    seed: u64,
    n: usize,
    budget: f64,
}

#[derive(Serialize)]
struct TracePoint {
    index: usize,
    chosen: usize,
    spend: f64,
}

#[derive(Serialize)]
struct TraceResponse {
    p_hat: f64,
    delta: f64,
    bound: f64,
    costs: Vec<f64>,
    calls: Vec<usize>,
    mean_accuracy: f64,
    trace: Vec<TracePoint>,
}

fn trace_inner(request: &str) -> Result<TraceResponse, String> {
    let req: TraceRequest =
        serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    check_shape(req.n, req.budget)?;
    let (assignments, mean_accuracy, _, p_hat) = replay_point(req.seed, req.n, req.budget)?;
    let (_, eval) = synth_instance_pair(req.n, req.n, req.budget, req.seed)
        .map_err(|e| e.to_string())?;
    let costs = eval.costs();
    let mut calls = vec![0usize; costs.n_apis()];
    let step = (req.n / TRACE_POINTS).max(1);
    let mut spend = 0.0f64;
    let mut trace = Vec::new();
    for (i, &k) in assignments.iter().enumerate() {
        calls[k] += 1;
        spend += costs.hatted_cost(k);
        if i % step == 0 || i + 1 == req.n {
            trace.push(TracePoint {
                index: i,
                chosen: k,
                spend,
            });
        }
    }
    Ok(TraceResponse {
        p_hat,
        delta: buffer_for(req.n),
        bound: req.n as f64 * costs.hatted_budget(req.budget),
        costs: costs.costs().to_vec(),
        calls,
        mean_accuracy,
        trace,
    })
}

/// Item-by-item spend trajectory of one online replay.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn replay_trace(request: &str) -> String {
    respond(trace_inner(request))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(body: &str) -> Value {
        serde_json::from_str(body).unwrap()
    }

    #[test]
    fn combining_matches_the_library_fixture() {
        let body = combine_labels(
            r#"{"base":[["person",0.8],["car",0.7]],"addon":[["car",0.5],["bike",0.4]],"w":0.3,"theta":0.25}"#,
        );
        let v = parse(&body);
        let scores: Vec<(String, f64)> = v["scores"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_str().unwrap().to_string(), p[1].as_f64().unwrap()))
            .collect();
        let lookup = |l: &str| scores.iter().find(|(s, _)| s == l).unwrap().1;
        assert!((lookup("person") - 0.24).abs() < 1e-12);
        assert!((lookup("car") - 0.56).abs() < 1e-12);
        assert!((lookup("bike") - 0.28).abs() < 1e-12);
        let kept: Vec<&str> = v["kept"].as_array().unwrap().iter().map(|k| k.as_str().unwrap()).collect();
        assert_eq!(kept, ["bike", "car"]);
    }

    #[test]
    fn malformed_requests_come_back_as_errors() {
        for body in [
            combine_labels("not json"),
            combine_labels(r#"{"base":[["x",1.4]],"addon":[],"w":0.5,"theta":0.5}"#),
            budget_curve(r#"{"seed":1,"n":3,"budgets":[0.5]}"#),
            replay_trace(r#"{"seed":1,"n":100,"budget":-2.0}"#),
        ] {
            assert!(parse(&body)["error"].is_string(), "no error in {body}");
        }
    }

    #[test]
    fn curves_improve_with_budget_and_stay_affordable() {
        let body = budget_curve(r#"{"seed":3,"n":400,"budgets":[0.0,0.25,0.75,1.5]}"#);
        let v = parse(&body);
        let points = v["points"].as_array().unwrap();
        assert_eq!(points.len(), 4);
        let mut last_offline = -1.0;
        for p in points {
            let offline = p["offline_accuracy"].as_f64().unwrap();
            let online = p["online_accuracy"].as_f64().unwrap();
            let spend = p["online_spend"].as_f64().unwrap();
            let budget = p["budget"].as_f64().unwrap();
            // a larger budget only relaxes the constraint, and a feasible
            // replay can top the rounded optimum by at most the one demoted row
            assert!(offline >= last_offline - 1e-9);
            assert!(online <= offline + 1.0 / 400.0 + 1e-9);
            assert!(spend <= budget + 1e-12);
            last_offline = offline;
        }
        assert_eq!(body, budget_curve(r#"{"seed":3,"n":400,"budgets":[0.0,0.25,0.75,1.5]}"#));
    }

    #[test]
    fn traces_account_for_every_item_and_respect_the_bound() {
        let body = replay_trace(r#"{"seed":8,"n":2000,"budget":0.5}"#);
        let v = parse(&body);
        let calls: Vec<u64> = v["calls"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).collect();
        assert_eq!(calls.iter().sum::<u64>(), 2000);
        let bound = v["bound"].as_f64().unwrap();
        let trace = v["trace"].as_array().unwrap();
        assert!(trace.len() <= TRACE_POINTS + 1);
        let mut last_spend = 0.0;
        for p in trace {
            let spend = p["spend"].as_f64().unwrap();
            assert!(spend >= last_spend && spend <= bound);
            last_spend = spend;
        }
        assert_eq!(trace.last().unwrap()["index"].as_u64().unwrap(), 1999);
    }
}
