//! End-to-end runs of the compiled binary against generated fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_apiselect"));
    // keep an ambient seed override from leaking into the tests
    cmd.env_remove("FRUGAL_SEED");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Deterministic 240-item fixture shared by most tests.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let records = dir.join("records.jsonl");
    let costs = dir.join("costs.json");
    run_ok(bin().args([
        "synth",
        "--n-records",
        "240",
        "--seed",
        "7",
        "--out-records",
        records.to_str().unwrap(),
        "--out-costs",
        costs.to_str().unwrap(),
    ]));
    (records, costs)
}

fn train_fixture(dir: &Path, budget: &str, out_name: &str) -> PathBuf {
    let (records, costs) = fixture(dir);
    let out = dir.join(out_name);
    run_ok(bin().args([
        "train",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budget",
        budget,
        "--out",
        out.to_str().unwrap(),
    ]));
    out
}

#[test]
fn train_writes_a_parsable_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_fixture(dir.path(), "0.4", "strategy.json");
    let body = std::fs::read_to_string(&out).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(parsed["format"], 1);
    assert!(parsed["p_hat"].as_f64().unwrap() >= 0.0);
    let delta = parsed["delta"].as_f64().unwrap();
    assert!(delta > 0.0 && delta < 1.0);
    assert!(dir.path().join("strategy.model.json").exists());
}

#[test]
fn train_below_base_cost_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let out = bin()
        .args([
            "train",
            "--records",
            records.to_str().unwrap(),
            "--costs",
            costs.to_str().unwrap(),
            "--base",
            "svc01",
            "--budget",
            "0.1",
            "--out",
            dir.path().join("s.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn base_search_writes_a_report_naming_the_winner() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let out = dir.path().join("searched.json");
    run_ok(bin().args([
        "train",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budget",
        "0.4",
        "--base-search",
        "--out",
        out.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("searched.search.json")).unwrap())
            .unwrap();
    let winner = report["winner"].as_str().unwrap();
    let candidates = report["candidates"].as_array().unwrap();
    // budget 0.4 affords svc00 (free) and svc01 (0.25) as bases
    assert_eq!(candidates.len(), 2);
    assert!(candidates.iter().any(|c| c["base"] == winner));
    assert!(out.exists());
}

#[test]
fn sweep_emits_sorted_rows_that_respect_their_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let out = dir.path().join("sweep.csv");
    let mut cmd = bin();
    cmd.args([
        "sweep",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budgets",
        "0.0,0.3,0.8",
        "--with-dap",
        "--with-baselines",
        "--out",
        out.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    let body = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<String>> = body
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();

    let keys: Vec<(String, f64)> = rows
        .iter()
        .map(|r| (r[3].clone(), r[0].parse().unwrap()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    assert_eq!(keys, sorted, "rows must sort by (strategy_kind, budget)");

    let mut kinds: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    kinds.dedup();
    for expected in [
        "dap_online",
        "majority",
        "offline",
        "online",
        "single_api:svc00",
        "single_api:svc01",
        "single_api:svc02",
        "single_api:svc03",
        "weighted_majority",
    ] {
        assert!(kinds.contains(&expected), "missing kind {expected}");
    }

    for r in &rows {
        let kind = r[3].as_str();
        if kind == "online" || kind == "offline" || kind == "dap_online" {
            let budget: f64 = r[0].parse().unwrap();
            let realized: f64 = r[1].parse().unwrap();
            assert!(realized <= budget + 1e-12, "{kind} overspent: {realized} > {budget}");
        }
    }

    // with no add-on budget every variant serves the base only
    let acc_at_zero = |kind: &str| {
        rows.iter()
            .find(|r| r[3] == kind && r[0] == "0")
            .map(|r| r[2].clone())
            .unwrap()
    };
    assert_eq!(acc_at_zero("online"), acc_at_zero("dap_online"));

    // reruns are byte-identical
    let out2 = dir.path().join("sweep2.csv");
    let mut cmd = bin();
    cmd.args([
        "sweep",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budgets",
        "0.0,0.3,0.8",
        "--with-dap",
        "--with-baselines",
        "--out",
        out2.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    assert_eq!(body, std::fs::read_to_string(&out2).unwrap());
}

#[test]
fn ample_budget_matches_or_beats_every_single_service() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let out = dir.path().join("sweep.csv");
    run_ok(bin().args([
        "sweep",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budgets",
        "2.0",
        "--out",
        out.to_str().unwrap(),
    ]));
    let body = std::fs::read_to_string(&out).unwrap();
    let mut online = f64::NAN;
    let mut best_single = f64::MIN;
    for line in body.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let acc: f64 = f[2].parse().unwrap();
        if f[3] == "online" {
            online = acc;
        } else if f[3].starts_with("single_api:") {
            best_single = best_single.max(acc);
        }
    }
    assert!(
        online >= best_single - 0.05,
        "online {online} fell behind best single {best_single}"
    );
}

#[test]
fn sweep_rejects_an_empty_budget_list() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let out = bin()
        .args([
            "sweep",
            "--records",
            records.to_str().unwrap(),
            "--costs",
            costs.to_str().unwrap(),
            "--budgets",
            "",
            "--out",
            dir.path().join("sweep.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget list"));
}

#[test]
fn replay_logs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = train_fixture(dir.path(), "0.4", "strategy.json");
    let records = dir.path().join("records.jsonl");
    let run = |name: &str| {
        let log = dir.path().join(name);
        let out = run_ok(bin().args([
            "replay",
            "--strategy",
            strategy.to_str().unwrap(),
            "--records",
            records.to_str().unwrap(),
            "--out",
            log.to_str().unwrap(),
        ]));
        (std::fs::read_to_string(&log).unwrap(), out.stdout)
    };
    let (log1, summary1) = run("log1.csv");
    let (log2, summary2) = run("log2.csv");
    assert_eq!(log1, log2);
    assert_eq!(summary1, summary2);

    assert_eq!(log1.lines().count(), 241, "header plus one row per record");
    let summary: serde_json::Value = serde_json::from_slice(&summary1).unwrap();
    let total: f64 = summary["calls"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12, "call fractions sum to {total}");
    assert!(summary["mean_cost"].as_f64().unwrap() <= 0.4);
}

#[test]
fn zero_addon_budget_replays_to_the_base_only() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = train_fixture(dir.path(), "0.0", "strategy.json");
    let records = dir.path().join("records.jsonl");
    let out = run_ok(bin().args([
        "replay",
        "--strategy",
        strategy.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--out",
        dir.path().join("log.csv").to_str().unwrap(),
    ]));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["calls"]["svc00"].as_f64().unwrap(), 1.0);
    assert_eq!(summary["mean_cost"].as_f64().unwrap(), 0.0);
}

#[test]
fn replay_rejects_records_with_a_different_service_set() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = train_fixture(dir.path(), "0.4", "strategy.json");
    let other_records = dir.path().join("other.jsonl");
    let other_costs = dir.path().join("other_costs.json");
    run_ok(bin().args([
        "synth",
        "--n-records",
        "40",
        "--n-apis",
        "3",
        "--out-records",
        other_records.to_str().unwrap(),
        "--out-costs",
        other_costs.to_str().unwrap(),
    ]));
    let out = bin()
        .args([
            "replay",
            "--strategy",
            strategy.to_str().unwrap(),
            "--records",
            other_records.to_str().unwrap(),
            "--out",
            dir.path().join("log.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_env_var_substitutes_for_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (records, costs) = fixture(dir.path());
    let by_flag = dir.path().join("flag.json");
    run_ok(bin().args([
        "train",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budget",
        "0.4",
        "--seed",
        "5",
        "--out",
        by_flag.to_str().unwrap(),
    ]));
    let by_env = dir.path().join("env.json");
    let mut cmd = bin();
    cmd.env("FRUGAL_SEED", "5");
    run_ok(cmd.args([
        "train",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--budget",
        "0.4",
        "--out",
        by_env.to_str().unwrap(),
    ]));
    // the files differ only in the model reference they embed
    let parse = |p: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("model_file");
        v
    };
    assert_eq!(parse(&by_flag), parse(&by_env));
    let read = |p: PathBuf| std::fs::read_to_string(p).unwrap();
    assert_eq!(
        read(dir.path().join("flag.model.json")),
        read(dir.path().join("env.model.json"))
    );
}

#[test]
fn embeddings_route_works_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    let costs = dir.path().join("costs.json");
    let embeddings = dir.path().join("embeddings.jsonl");
    run_ok(bin().args([
        "synth",
        "--n-records",
        "240",
        "--out-records",
        records.to_str().unwrap(),
        "--out-costs",
        costs.to_str().unwrap(),
        "--out-embeddings",
        embeddings.to_str().unwrap(),
        "--dim",
        "5",
    ]));
    let strategy = dir.path().join("strategy.json");
    run_ok(bin().args([
        "train",
        "--records",
        records.to_str().unwrap(),
        "--costs",
        costs.to_str().unwrap(),
        "--embeddings",
        embeddings.to_str().unwrap(),
        "--budget",
        "0.4",
        "--out",
        strategy.to_str().unwrap(),
    ]));
    let out = run_ok(bin().args([
        "replay",
        "--strategy",
        strategy.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--embeddings",
        embeddings.to_str().unwrap(),
        "--out",
        dir.path().join("log.csv").to_str().unwrap(),
    ]));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["mean_cost"].as_f64().unwrap() <= 0.4);
}
