//! End-to-end training and replay: recorded logs in, a runnable budget
//! strategy out.
//!
//! Training composes the other modules in the order the data flows: tune a
//! combiner per service, measure every service's combined accuracy on the
//! training items, fit the accuracy predictor on the base outputs, tune the
//! budget buffer on validation replays, and estimate the price threshold.
//! The result carries everything replay needs and serializes to a JSON
//! strategy file with the predictor stored alongside.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::combiner::{combine_and_predict, tune_combiner, true_accuracy_vector, CombinerParams};
use crate::dataset::{Dataset, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::predictor::{
    featurize_bounded, featurize_unbounded, fit_dummy, fit_forest, load_model, save_model,
    AccuracyModel, FeatureVector, ForestHyperparams,
};
use crate::selector::{
    estimate_p_hat, run_online, tune_delta_with, OnlinePolicy, SelectionInstance,
};
use crate::types::{strategy_cost, AccuracyVector, CostTable, Record, ScoredLabelSet};

/// How base outputs turn into predictor features: a fixed vocabulary for
/// bounded label spaces, otherwise score-weighted label embeddings.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    OneHot(Vocabulary),
    Embedding(EmbeddingTable),
}

impl FeatureSpec {
    /// Picks the scheme for a dataset: embeddings when supplied, else the
    /// dataset's own vocabulary.
    pub fn for_dataset(dataset: &Dataset, embeddings: Option<EmbeddingTable>) -> Result<Self> {
        if let Some(table) = embeddings {
            return Ok(FeatureSpec::Embedding(table));
        }
        match dataset.vocabulary() {
            Some(v) => Ok(FeatureSpec::OneHot(v.clone())),
            None => Err(Error::InvalidInput(
                "an unbounded label space needs an embedding table".into(),
            )),
        }
    }

    pub fn featurize(&self, output: &ScoredLabelSet) -> FeatureVector {
        match self {
            FeatureSpec::OneHot(v) => featurize_bounded(output, v),
            FeatureSpec::Embedding(t) => featurize_unbounded(output, t),
        }
    }
}

/// Training knobs; `new` fills in the conventional defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub base: usize,
    pub budget: f64,
    /// Grid resolution for combiner tuning (grid points per axis minus one).
    pub combiner_grid: usize,
    pub metric: Metric,
    pub seed: u64,
    pub forest: ForestHyperparams,
    /// Replaces the forest with the constant mean-accuracy model.
    pub dummy_predictor: bool,
}

impl TrainOptions {
    pub fn new(base: usize, budget: f64) -> Self {
        Self {
            base,
            budget,
            combiner_grid: 10,
            metric: Metric::Jaccard,
            seed: 0,
            forest: ForestHyperparams::default(),
            dummy_predictor: false,
        }
    }
}

/// Everything needed to serve a stream: tuned combiners, the fitted
/// predictor, and the priced selection policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedStrategy {
    pub api_names: Vec<String>,
    pub base: usize,
    pub p_hat: f64,
    pub delta: f64,
    pub budget: f64,
    /// Cost table already rebased onto `base`.
    pub costs: CostTable,
    pub combiners: Vec<CombinerParams>,
    pub model: AccuracyModel,
}

impl TrainedStrategy {
    /// Predicted per-service accuracy rows for every record, from the base
    /// outputs alone.
    pub fn predicted_rows(
        &self,
        records: &[Record],
        features: &FeatureSpec,
    ) -> Result<Vec<AccuracyVector>> {
        records
            .iter()
            .map(|r| {
                if r.n_apis() != self.api_names.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.api_names.len(),
                        got: r.n_apis(),
                    });
                }
                self.model
                    .predict(&features.featurize(&r.predictions[self.base]))
            })
            .collect()
    }

    /// The selection problem this strategy's budget poses for a dataset,
    /// with rows predicted by its own model.
    pub fn instance_for(&self, dataset: &Dataset, features: &FeatureSpec) -> Result<SelectionInstance> {
        self.check_schema(dataset)?;
        let rows = self.predicted_rows(dataset.records(), features)?;
        SelectionInstance::new(rows, self.costs.clone(), self.budget)
    }

    fn check_schema(&self, dataset: &Dataset) -> Result<()> {
        if dataset.api_names() != self.api_names.as_slice() {
            return Err(Error::InvalidInput(format!(
                "dataset services {:?} do not match the strategy's {:?}",
                dataset.api_names(),
                self.api_names
            )));
        }
        Ok(())
    }
}

/// Fits a complete strategy on a train/validation pair sharing one schema.
pub fn train_strategy(
    train: &Dataset,
    val: &Dataset,
    costs: &CostTable,
    features: &FeatureSpec,
    opts: &TrainOptions,
) -> Result<TrainedStrategy> {
    if train.api_names() != val.api_names() {
        return Err(Error::InvalidInput(
            "train and validation datasets disagree on services".into(),
        ));
    }
    let k = train.api_names().len();
    if opts.base >= k {
        return Err(Error::ApiIndexOutOfRange {
            index: opts.base,
            len: k,
        });
    }
    let costs = costs.with_base(opts.base)?;
    if costs.hatted_budget(opts.budget) < 0.0 {
        return Err(Error::Infeasible(format!(
            "budget {} is below the base service cost {}",
            opts.budget,
            costs.base_cost()
        )));
    }

    let combiners: Vec<CombinerParams> = (0..k)
        .map(|j| tune_combiner(train.records(), opts.base, j, opts.combiner_grid, opts.metric))
        .collect::<Result<_>>()?;

    let targets = |records: &[Record]| -> Vec<AccuracyVector> {
        records
            .iter()
            .map(|r| true_accuracy_vector(r, opts.base, &combiners, opts.metric))
            .collect()
    };
    let train_targets = targets(train.records());
    let val_targets = targets(val.records());

    let featurized = |records: &[Record]| -> Vec<FeatureVector> {
        records
            .iter()
            .map(|r| features.featurize(&r.predictions[opts.base]))
            .collect()
    };
    let train_features = featurized(train.records());

    let model = if opts.dummy_predictor {
        fit_dummy(&train_targets)?
    } else {
        fit_forest(&train_features, &train_targets, &opts.forest, opts.seed)?
    };

    let predict = |feats: &[FeatureVector]| -> Result<Vec<AccuracyVector>> {
        feats.iter().map(|f| model.predict(f)).collect()
    };
    let train_rows = predict(&train_features)?;
    let val_rows = predict(&featurized(val.records()))?;

    let train_inst = SelectionInstance::new(train_rows, costs.clone(), opts.budget)?;
    let val_inst = SelectionInstance::new(val_rows, costs.clone(), opts.budget)?;
    // replays during tuning select on predicted rows but are scored against
    // the measured accuracies, the quantity replay itself reports
    let alphas: Vec<i32> = (-10..=10).collect();
    let delta = tune_delta_with(&train_inst, &val_inst, opts.budget, Some(&val_targets), &alphas)?;
    let p_hat = estimate_p_hat(&train_inst, opts.budget, delta)?;

    Ok(TrainedStrategy {
        api_names: train.api_names().to_vec(),
        base: opts.base,
        p_hat,
        delta,
        budget: opts.budget,
        costs,
        combiners,
        model,
    })
}

/// One served item in a replay log.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem {
    pub id: String,
    pub chosen: usize,
    pub addon_cost: f64,
    /// Running add-on spend through this item.
    pub cumulative_spend: f64,
    /// The model's accuracy estimate for the chosen service.
    pub predicted_accuracy: f64,
}

/// A full replay: the per-item log plus headline aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub items: Vec<ReplayItem>,
    /// Fraction of items served by each service; sums to 1.
    pub call_fractions: Vec<f64>,
    /// Mean measured accuracy of the served label sets.
    pub mean_accuracy: f64,
    /// Mean per-item cost including the unconditional base call.
    pub mean_cost: f64,
}

impl ReplayOutcome {
    pub fn assignments(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.chosen).collect()
    }
}

/// Streams a dataset through the strategy's online policy and scores the
/// results against the recorded truth.
pub fn replay_strategy(
    strategy: &TrainedStrategy,
    test: &Dataset,
    features: &FeatureSpec,
    metric: Metric,
) -> Result<ReplayOutcome> {
    strategy.check_schema(test)?;
    let rows = strategy.predicted_rows(test.records(), features)?;
    let n = test.len();
    let mut policy = OnlinePolicy::new(strategy.p_hat, strategy.delta, strategy.base)?;
    let stream = rows.iter().cloned().enumerate();
    let picks = run_online(stream, &mut policy, n, strategy.budget, &strategy.costs)?;

    let mut items = Vec::with_capacity(n);
    let mut counts = vec![0usize; strategy.api_names.len()];
    let mut cumulative = 0.0;
    let mut accuracy = 0.0;
    for (i, chosen) in picks {
        let record = &test.records()[i];
        let addon_cost = strategy.costs.hatted_cost(chosen);
        cumulative += addon_cost;
        counts[chosen] += 1;
        let served = combine_and_predict(record, strategy.base, chosen, strategy.combiners[chosen]);
        accuracy += metric.score(&record.truth, &served);
        items.push(ReplayItem {
            id: record.id.clone(),
            chosen,
            addon_cost,
            cumulative_spend: cumulative,
            predicted_accuracy: rows[i].get(chosen),
        });
    }
    let assignments: Vec<usize> = items.iter().map(|i| i.chosen).collect();
    Ok(ReplayOutcome {
        call_fractions: counts.iter().map(|c| *c as f64 / n as f64).collect(),
        mean_accuracy: accuracy / n as f64,
        mean_cost: strategy_cost(&assignments, &strategy.costs)?,
        items,
    })
}

pub const STRATEGY_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StrategyFile {
    format: u32,
    /// Service order; indices elsewhere refer to this array.
    apis: Vec<String>,
    base: String,
    p_hat: f64,
    delta: f64,
    budget: f64,
    /// Per-service price keyed by name; must cover `apis` exactly.
    costs: BTreeMap<String, f64>,
    combiners: Vec<CombinerParams>,
    /// Predictor document, relative to this file's directory.
    model_file: String,
}

/// Writes the strategy JSON at `path` and the predictor next to it as
/// `<stem>.model.json`.
pub fn save_strategy(strategy: &TrainedStrategy, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("strategy");
    let model_file = format!("{stem}.model.json");
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    save_model(&strategy.model, &dir.join(&model_file))?;
    let file = StrategyFile {
        format: STRATEGY_FORMAT,
        apis: strategy.api_names.clone(),
        base: strategy.api_names[strategy.base].clone(),
        p_hat: strategy.p_hat,
        delta: strategy.delta,
        budget: strategy.budget,
        costs: strategy
            .api_names
            .iter()
            .cloned()
            .zip(strategy.costs.costs().iter().copied())
            .collect(),
        combiners: strategy.combiners.clone(),
        model_file,
    };
    let body =
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_strategy(path: &Path) -> Result<TrainedStrategy> {
    let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let file: StrategyFile = serde_json::from_str(&body)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    if file.format != STRATEGY_FORMAT {
        return Err(Error::InvalidInput(format!(
            "unsupported strategy format {} (expected {STRATEGY_FORMAT})",
            file.format
        )));
    }
    let api_names = file.apis;
    if file.costs.len() != api_names.len() {
        return Err(Error::InvalidInput(
            "cost table and service list disagree".into(),
        ));
    }
    let cost_values: Vec<f64> = api_names
        .iter()
        .map(|n| {
            file.costs.get(n).copied().ok_or_else(|| {
                Error::InvalidInput(format!("service {n:?} is missing from the cost table"))
            })
        })
        .collect::<Result<_>>()?;
    let base = api_names
        .iter()
        .position(|n| *n == file.base)
        .ok_or_else(|| {
            Error::InvalidInput(format!("base service {:?} is not in the cost table", file.base))
        })?;
    let costs = CostTable::new(cost_values, base)?;
    if costs.hatted_budget(file.budget) < 0.0 {
        return Err(Error::Infeasible(format!(
            "budget {} is below the base service cost {}",
            file.budget,
            costs.base_cost()
        )));
    }
    if file.combiners.len() != api_names.len() {
        return Err(Error::DimensionMismatch {
            expected: api_names.len(),
            got: file.combiners.len(),
        });
    }
    for c in &file.combiners {
        if !((0.0..=1.0).contains(&c.w) && (0.0..=1.0).contains(&c.theta)) {
            return Err(Error::InvalidInput(
                "combiner parameters must lie in [0, 1]".into(),
            ));
        }
    }
    if !(file.p_hat.is_finite() && file.p_hat >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "price threshold {} must be finite and non-negative",
            file.p_hat
        )));
    }
    if !(file.delta > 0.0 && file.delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "budget buffer {} must lie strictly between 0 and 1",
            file.delta
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let model = load_model(&dir.join(&file.model_file))?;
    if model.n_outputs() != api_names.len() {
        return Err(Error::DimensionMismatch {
            expected: api_names.len(),
            got: model.n_outputs(),
        });
    }
    Ok(TrainedStrategy {
        api_names,
        base,
        p_hat: file.p_hat,
        delta: file.delta,
        budget: file.budget,
        costs,
        combiners: file.combiners,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, truth: &[&str], preds: Vec<Vec<(&str, f64)>>) -> Record {
        Record {
            id: id.into(),
            truth: truth.iter().map(|s| s.to_string()).collect(),
            predictions: preds
                .into_iter()
                .map(|p| ScoredLabelSet::from_entries(p.into_iter().map(|(l, s)| (l, s))))
                .collect(),
        }
    }

    /// Base service is mediocre on "hard" items (low scores); the paid
    /// service nails everything. Ids carry the pattern for determinism.
    fn toy_dataset(n: usize, offset: usize) -> Dataset {
        let names = vec!["svc_base".to_string(), "svc_paid".to_string()];
        let records = (0..n)
            .map(|i| {
                let hard = (i + offset) % 2 == 0;
                let (score, extra) = if hard { (0.35, 0.5) } else { (0.9, 0.0) };
                let mut base = vec![("x", score)];
                if extra > 0.0 {
                    base.push(("y", extra));
                }
                record(
                    &format!("r{}", i + offset),
                    &["x"],
                    vec![base, vec![("x", 0.95)]],
                )
            })
            .collect();
        Dataset::new(records, names).unwrap()
    }

    fn toy_costs() -> CostTable {
        CostTable::new(vec![0.0, 1.0], 0).unwrap()
    }

    #[test]
    fn training_produces_a_complete_strategy() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let opts = TrainOptions::new(0, 0.6);
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        assert_eq!(s.api_names, vec!["svc_base", "svc_paid"]);
        assert_eq!(s.combiners.len(), 2);
        assert!(s.p_hat >= 0.0);
        assert!(s.delta > 0.0 && s.delta < 1.0);
        // same inputs, same strategy
        let again = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn dummy_predictor_option_yields_constant_rows() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let mut opts = TrainOptions::new(0, 0.6);
        opts.dummy_predictor = true;
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        let rows = s.predicted_rows(train.records(), &features).unwrap();
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn infeasible_budget_is_rejected_up_front() {
        let train = toy_dataset(6, 0);
        let val = toy_dataset(4, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let costs = CostTable::new(vec![0.5, 1.0], 0).unwrap();
        let opts = TrainOptions::new(0, 0.4);
        assert!(matches!(
            train_strategy(&train, &val, &costs, &features, &opts),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn replay_reports_consistent_aggregates() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let test = toy_dataset(8, 200);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let opts = TrainOptions::new(0, 0.6);
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        let outcome = replay_strategy(&s, &test, &features, Metric::Jaccard).unwrap();
        assert_eq!(outcome.items.len(), 8);
        let total: f64 = outcome.call_fractions.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(outcome.mean_cost <= s.budget + 1e-12);
        // cumulative spend is the running sum of the addon column
        let mut run = 0.0;
        for item in &outcome.items {
            run += item.addon_cost;
            assert_eq!(item.cumulative_spend, run);
        }
        let again = replay_strategy(&s, &test, &features, Metric::Jaccard).unwrap();
        assert_eq!(outcome, again);
    }

    #[test]
    fn replay_with_a_forced_base_policy_serves_base_only() {
        let test = toy_dataset(5, 0);
        let features = FeatureSpec::for_dataset(&test, None).unwrap();
        let strategy = TrainedStrategy {
            api_names: vec!["svc_base".into(), "svc_paid".into()],
            base: 0,
            p_hat: 100.0,
            delta: 0.5,
            budget: 0.6,
            costs: toy_costs(),
            combiners: vec![
                CombinerParams { w: 1.0, theta: 0.2 },
                CombinerParams { w: 0.0, theta: 0.2 },
            ],
            model: AccuracyModel::Dummy {
                mean: vec![0.6, 0.9],
            },
        };
        let outcome = replay_strategy(&strategy, &test, &features, Metric::Jaccard).unwrap();
        assert_eq!(outcome.call_fractions[0], 1.0);
        assert_eq!(outcome.mean_cost, 0.0);
        assert!(outcome.items.iter().all(|i| i.chosen == 0));
    }

    #[test]
    fn replay_rejects_mismatched_schemas() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let opts = TrainOptions::new(0, 0.6);
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        let other = Dataset::new(
            vec![record("q", &["x"], vec![vec![("x", 0.5)], vec![]])],
            vec!["other_a".into(), "other_b".into()],
        )
        .unwrap();
        assert!(replay_strategy(&s, &other, &features, Metric::Jaccard).is_err());
    }

    #[test]
    fn strategy_files_round_trip() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let opts = TrainOptions::new(0, 0.6);
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strategy.json");
        save_strategy(&s, &path).unwrap();
        assert!(dir.path().join("strategy.model.json").exists());
        let loaded = load_strategy(&path).unwrap();
        assert_eq!(s, loaded);
    }

    #[test]
    fn strategy_files_keep_unsorted_service_order() {
        let strategy = TrainedStrategy {
            api_names: vec!["zeta".into(), "alpha".into()],
            base: 0,
            p_hat: 0.25,
            delta: 0.1,
            budget: 0.6,
            costs: CostTable::new(vec![0.0, 1.0], 0).unwrap(),
            combiners: vec![
                CombinerParams { w: 1.0, theta: 0.2 },
                CombinerParams { w: 0.3, theta: 0.4 },
            ],
            model: AccuracyModel::Dummy {
                mean: vec![0.6, 0.9],
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strategy.json");
        save_strategy(&strategy, &path).unwrap();
        let loaded = load_strategy(&path).unwrap();
        assert_eq!(loaded.api_names, vec!["zeta", "alpha"]);
        assert_eq!(strategy, loaded);
    }

    #[test]
    fn loading_rejects_corrupt_strategies() {
        let train = toy_dataset(12, 0);
        let val = toy_dataset(6, 100);
        let features = FeatureSpec::for_dataset(&train, None).unwrap();
        let opts = TrainOptions::new(0, 0.6);
        let s = train_strategy(&train, &val, &toy_costs(), &features, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strategy.json");
        save_strategy(&s, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        // unknown base name (cost keys left intact)
        std::fs::write(&path, body.replace("\"base\": \"svc_base\"", "\"base\": \"nope\"")).unwrap();
        assert!(load_strategy(&path).is_err());
        // unsupported format number
        std::fs::write(&path, body.replace("\"format\": 1", "\"format\": 9")).unwrap();
        assert!(load_strategy(&path).is_err());
    }
}
