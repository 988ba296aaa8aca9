//! Command implementations. Every command is deterministic given its seed:
//! splits, model fitting, and replays all run off one ChaCha stream, and
//! output files are written with stable formatting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use apiselect::base_search::{search_base, BaseSearchReport};
use apiselect::baselines::{
    api_accuracy_weights, majority_vote, tune_vote_threshold, weighted_majority_vote,
    WeightedVoteParams,
};
use apiselect::combiner::combine_and_predict;
use apiselect::dataset::{
    load_cost_table, load_embeddings, load_records, save_cost_table, save_embeddings,
    save_records, split, Dataset,
};
use apiselect::metrics::Metric;
use apiselect::pipeline::{
    load_strategy, replay_strategy, save_strategy, train_strategy, FeatureSpec, TrainOptions,
    TrainedStrategy,
};
use apiselect::selector::offline_strategy;
use apiselect::synth::{synth_dataset, synth_embeddings, SynthDatasetConfig};
use apiselect::types::{strategy_cost, CostTable};
use apiselect::{Error, Result};
use serde::Serialize;

use crate::{DataArgs, ReplayArgs, SweepArgs, SynthArgs, TrainArgs};

/// Share of records used for tuning; the remainder is split evenly into
/// validation and held-out test.
const TRAIN_FRACTION: f64 = 0.6;

struct LoadedData {
    dataset: Dataset,
    costs: CostTable,
    features: FeatureSpec,
    metric: Metric,
    seed: u64,
}

fn load_common(args: &DataArgs) -> Result<LoadedData> {
    let dataset = load_records(&args.records)?;
    let mut costs = load_cost_table(&args.costs, dataset.api_names())?;
    if let Some(name) = &args.base {
        let idx = dataset
            .api_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown base service {name:?}")))?;
        costs = costs.with_base(idx)?;
    }
    let embeddings = match &args.embeddings {
        Some(p) => Some(load_embeddings(p)?),
        None => None,
    };
    let features = FeatureSpec::for_dataset(&dataset, embeddings)?;
    Ok(LoadedData {
        dataset,
        costs,
        features,
        metric: args.metric,
        seed: args.seed,
    })
}

fn train_options(data: &LoadedData, budget: f64) -> TrainOptions {
    let mut opts = TrainOptions::new(data.costs.base(), budget);
    opts.metric = data.metric;
    opts.seed = data.seed;
    opts
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let data = load_common(&args.data)?;
    let (train, val, _) = split(&data.dataset, TRAIN_FRACTION, data.seed)?;
    let opts = train_options(&data, args.budget);

    let strategy = match &args.base_search {
        None => train_strategy(&train, &val, &data.costs, &data.features, &opts)?,
        Some(list) => {
            let candidates = resolve_candidates(list, &data, args.budget)?;
            let report = search_base(
                &train,
                &val,
                &data.costs,
                args.budget,
                &candidates,
                &data.features,
                &opts,
            )?;
            let report_path = search_report_path(&args.out);
            write_search_report(&report, data.dataset.api_names(), &report_path)?;
            println!("base search report: {}", report_path.display());
            report.winning_strategy().clone()
        }
    };
    save_strategy(&strategy, &args.out)?;
    println!("strategy: {}", args.out.display());
    println!("base: {}", strategy.api_names[strategy.base]);
    println!("p_hat: {}", strategy.p_hat);
    println!("delta: {}", strategy.delta);
    Ok(())
}

fn resolve_candidates(list: &str, data: &LoadedData, budget: f64) -> Result<Vec<usize>> {
    if list.trim().is_empty() {
        let all: Vec<usize> = (0..data.costs.n_apis())
            .filter(|&k| data.costs.costs()[k] <= budget)
            .collect();
        if all.is_empty() {
            return Err(Error::Infeasible(format!(
                "no service is priced within the budget {budget}"
            )));
        }
        return Ok(all);
    }
    list.split(',')
        .map(|name| {
            let name = name.trim();
            data.dataset
                .api_index(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown candidate service {name:?}")))
        })
        .collect()
}

fn search_report_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("strategy");
    out.with_file_name(format!("{stem}.search.json"))
}

#[derive(Serialize)]
struct SearchCandidateRow<'a> {
    base: &'a str,
    validation_accuracy: f64,
    validation_cost: f64,
    p_hat: f64,
    delta: f64,
}

#[derive(Serialize)]
struct SearchReportFile<'a> {
    winner: &'a str,
    candidates: Vec<SearchCandidateRow<'a>>,
}

fn write_search_report(
    report: &BaseSearchReport,
    api_names: &[String],
    path: &Path,
) -> Result<()> {
    let file = SearchReportFile {
        winner: &api_names[report.winner],
        candidates: report
            .candidates
            .iter()
            .map(|c| SearchCandidateRow {
                base: &api_names[c.base],
                validation_accuracy: c.validation_accuracy,
                validation_cost: c.validation_cost,
                p_hat: c.strategy.p_hat,
                delta: c.strategy.delta,
            })
            .collect(),
    };
    let body =
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, body + "\n").map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

struct SweepRow {
    budget: f64,
    realized_cost: f64,
    accuracy: f64,
    strategy_kind: String,
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let budgets = parse_budgets(&args.budgets)?;
    let data = load_common(&args.data)?;
    let (train, val, test) = split(&data.dataset, TRAIN_FRACTION, data.seed)?;
    let mut rows = Vec::new();

    for &budget in &budgets {
        let opts = train_options(&data, budget);
        let strategy = train_strategy(&train, &val, &data.costs, &data.features, &opts)?;

        let online = replay_strategy(&strategy, &test, &data.features, data.metric)?;
        rows.push(SweepRow {
            budget,
            realized_cost: online.mean_cost,
            accuracy: online.mean_accuracy,
            strategy_kind: "online".into(),
        });

        let instance = strategy.instance_for(&test, &data.features)?;
        let (assignments, _) = offline_strategy(&instance)?;
        rows.push(SweepRow {
            budget,
            realized_cost: strategy_cost(&assignments, &strategy.costs)?,
            accuracy: measured_accuracy(&strategy, &test, &assignments, data.metric),
            strategy_kind: "offline".into(),
        });

        if args.with_dap {
            let mut dap_opts = train_options(&data, budget);
            dap_opts.dummy_predictor = true;
            let dap = train_strategy(&train, &val, &data.costs, &data.features, &dap_opts)?;
            let outcome = replay_strategy(&dap, &test, &data.features, data.metric)?;
            rows.push(SweepRow {
                budget,
                realized_cost: outcome.mean_cost,
                accuracy: outcome.mean_accuracy,
                strategy_kind: "dap_online".into(),
            });
        }
    }

    // ensembles and single services cost the same at every budget, so each
    // contributes one constant point with budget = realized cost
    if args.with_baselines {
        let full_cost: f64 = data.costs.costs().iter().sum();
        let majority_acc = mean_over(&test, |r| data.metric.score(&r.truth, &majority_vote(r)));
        rows.push(SweepRow {
            budget: full_cost,
            realized_cost: full_cost,
            accuracy: majority_acc,
            strategy_kind: "majority".into(),
        });
        let weights = api_accuracy_weights(train.records())?;
        let threshold = tune_vote_threshold(train.records(), &weights, 10)?;
        let params = WeightedVoteParams::new(weights, threshold)?;
        let mut total = 0.0;
        for r in test.records() {
            total += data.metric.score(&r.truth, &weighted_majority_vote(r, &params)?);
        }
        rows.push(SweepRow {
            budget: full_cost,
            realized_cost: full_cost,
            accuracy: total / test.len() as f64,
            strategy_kind: "weighted_majority".into(),
        });
    }

    for (k, name) in data.dataset.api_names().iter().enumerate() {
        let acc = mean_over(&test, |r| {
            let raw = r.predictions[k].labels().map(str::to_string).collect();
            data.metric.score(&r.truth, &raw)
        });
        let cost = data.costs.costs()[k];
        rows.push(SweepRow {
            budget: cost,
            realized_cost: cost,
            accuracy: acc,
            strategy_kind: format!("single_api:{name}"),
        });
    }

    rows.sort_by(|a, b| {
        a.strategy_kind
            .cmp(&b.strategy_kind)
            .then(a.budget.total_cmp(&b.budget))
    });
    write_csv(
        &args.out,
        &["budget", "realized_cost", "accuracy", "strategy_kind"],
        rows.iter().map(|r| {
            vec![
                r.budget.to_string(),
                r.realized_cost.to_string(),
                r.accuracy.to_string(),
                r.strategy_kind.clone(),
            ]
        }),
    )?;
    println!("sweep table: {}", args.out.display());
    Ok(())
}

fn parse_budgets(list: &str) -> Result<Vec<f64>> {
    let mut budgets = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let b: f64 = part
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad budget {part:?}")))?;
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "budget {b} must be finite and non-negative"
            )));
        }
        budgets.push(b);
    }
    if budgets.is_empty() {
        return Err(Error::EmptyInput("budget list"));
    }
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    Ok(budgets)
}

fn mean_over(dataset: &Dataset, f: impl Fn(&apiselect::types::Record) -> f64) -> f64 {
    dataset.records().iter().map(f).sum::<f64>() / dataset.len() as f64
}

fn measured_accuracy(
    strategy: &TrainedStrategy,
    dataset: &Dataset,
    assignments: &[usize],
    metric: Metric,
) -> f64 {
    let mut total = 0.0;
    for (r, &k) in dataset.records().iter().zip(assignments) {
        let served = combine_and_predict(r, strategy.base, k, strategy.combiners[k]);
        total += metric.score(&r.truth, &served);
    }
    total / dataset.len() as f64
}

#[derive(Serialize)]
struct ReplaySummary {
    calls: BTreeMap<String, f64>,
    mean_accuracy: f64,
    mean_cost: f64,
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let strategy = load_strategy(&args.strategy)?;
    let dataset = load_records(&args.records)?;
    let embeddings = match &args.embeddings {
        Some(p) => Some(load_embeddings(p)?),
        None => None,
    };
    let features = FeatureSpec::for_dataset(&dataset, embeddings)?;
    let outcome = replay_strategy(&strategy, &dataset, &features, args.metric)?;

    write_csv(
        &args.out,
        &[
            "id",
            "chosen_api",
            "addon_cost",
            "cumulative_spend",
            "predicted_accuracy",
        ],
        outcome.items.iter().map(|item| {
            vec![
                item.id.clone(),
                strategy.api_names[item.chosen].clone(),
                item.addon_cost.to_string(),
                item.cumulative_spend.to_string(),
                item.predicted_accuracy.to_string(),
            ]
        }),
    )?;

    let summary = ReplaySummary {
        calls: strategy
            .api_names
            .iter()
            .cloned()
            .zip(outcome.call_fractions.iter().copied())
            .collect(),
        mean_accuracy: outcome.mean_accuracy,
        mean_cost: outcome.mean_cost,
    };
    let body =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{body}");
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthDatasetConfig {
        n_records: args.n_records,
        n_apis: args.n_apis,
        n_labels: args.n_labels,
        seed: args.seed,
    };
    let (dataset, costs) = synth_dataset(&cfg)?;
    save_records(&dataset, &args.out_records)?;
    save_cost_table(&costs, dataset.api_names(), &args.out_costs)?;
    println!("records: {}", args.out_records.display());
    println!("costs: {}", args.out_costs.display());
    if let Some(path) = &args.out_embeddings {
        let labels = dataset
            .vocabulary()
            .ok_or_else(|| Error::InvalidInput("synthetic dataset has no vocabulary".into()))?
            .labels()
            .to_vec();
        let table = synth_embeddings(&labels, args.dim, cfg.seed);
        save_embeddings(&table, path)?;
        println!("embeddings: {}", path.display());
    }
    Ok(())
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for row in rows {
        wtr.write_record(&row)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}
