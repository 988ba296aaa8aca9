//! Deterministic synthetic data: selection instances, predictor regression
//! sets, and full record logs with a known difficulty structure.
//!
//! Everything is driven by a seeded ChaCha stream, so one seed pins down a
//! whole fixture. Train/eval pairs use separate streams of the same key and
//! are therefore i.i.d. draws from the same distribution.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, EmbeddingTable};
use crate::error::Result;
use crate::predictor::{FeatureScheme, FeatureVector};
use crate::selector::SelectionInstance;
use crate::types::{AccuracyVector, CostTable, Record, ScoredLabelSet};

/// Canonical four-service price list: a free base plus upgrades at 1/4, 1,
/// and 3 credits. Dyadic prices keep accumulated spends exact in floats.
pub fn synth_cost_table() -> CostTable {
    CostTable::new(vec![0.0, 0.25, 1.0, 3.0], 0).expect("static table is valid")
}

/// Per-upgrade headroom shares matching [`synth_cost_table`]; gains per
/// credit shrink with price so every service wins somewhere.
const GAINS: [f64; 3] = [0.15, 0.3, 0.45];

/// Accuracy rows drawn i.i.d.: the base lands in [0.2, 0.5] and each
/// upgrade adds its share of a per-item headroom draw. Rows are
/// non-decreasing across services.
pub fn synth_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<AccuracyVector> {
    (0..n)
        .map(|_| {
            let base = 0.2 + 0.3 * rng.gen::<f64>();
            let headroom: f64 = rng.gen();
            let mut row = Vec::with_capacity(GAINS.len() + 1);
            row.push(base);
            for g in GAINS {
                row.push(base + g * headroom);
            }
            AccuracyVector::new(row)
        })
        .collect()
}

/// A train/eval instance pair drawn i.i.d. from one seed, sharing the
/// canonical cost table and budget.
pub fn synth_instance_pair(
    n_train: usize,
    n_eval: usize,
    budget: f64,
    seed: u64,
) -> Result<(SelectionInstance, SelectionInstance)> {
    let costs = synth_cost_table();
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(0);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);
    eval_rng.set_stream(1);
    let train = SelectionInstance::new(synth_rows(n_train, &mut train_rng), costs.clone(), budget)?;
    let eval = SelectionInstance::new(synth_rows(n_eval, &mut eval_rng), costs, budget)?;
    Ok((train, eval))
}

/// Regression fixture for predictor evaluation: features x ~ U(0,1)^d and
/// per-service accuracies that are noisy affine functions of single
/// coordinates, a_j = clamp(0.15 + 0.7·x[j mod d] + ε) with ε ~ N(0, σ²).
pub fn synth_regression(
    n: usize,
    d: usize,
    k: usize,
    sigma: f64,
    seed: u64,
) -> (Vec<FeatureVector>, Vec<AccuracyVector>) {
    assert!(d > 0 && k > 0, "need at least one feature and one service");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be non-negative");
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let a: Vec<f64> = (0..k)
            .map(|j| 0.15 + 0.7 * x[j % d] + noise.sample(&mut rng))
            .collect();
        features.push(FeatureVector {
            values: x,
            scheme: FeatureScheme::EmbeddingWeighted,
        });
        targets.push(AccuracyVector::clamped(a));
    }
    (features, targets)
}

/// Shape of a synthetic record log.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDatasetConfig {
    pub n_records: usize,
    pub n_apis: usize,
    /// Vocabulary size; labels are "l00", "l01", ...
    pub n_labels: usize,
    pub seed: u64,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            n_records: 400,
            n_apis: 4,
            n_labels: 8,
            seed: 7,
        }
    }
}

/// Synthetic record log with a latent difficulty per item.
///
/// Service k has skill q_k rising with its price; each truth label is
/// predicted with probability q_k + 0.25 − t/2 for difficulty t ~ U(0,1),
/// and the reported score tracks that probability. Base output scores
/// therefore reveal difficulty, which is what the accuracy predictor is
/// meant to pick up.
pub fn synth_dataset(cfg: &SynthDatasetConfig) -> Result<(Dataset, CostTable)> {
    assert!(cfg.n_apis >= 2, "need a base and at least one upgrade");
    assert!(cfg.n_labels >= 2, "need at least two labels");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<String> = (0..cfg.n_labels).map(|l| format!("l{l:02}")).collect();
    let names: Vec<String> = (0..cfg.n_apis).map(|k| format!("svc{k:02}")).collect();
    // free base, then dyadic prices 1/4, 1/2, 1, ...
    let costs: Vec<f64> = (0..cfg.n_apis)
        .map(|k| if k == 0 { 0.0 } else { 0.25 * (1 << (k - 1)) as f64 })
        .collect();
    let skill = |k: usize| 0.4 + 0.5 * k as f64 / (cfg.n_apis - 1) as f64;

    let records = (0..cfg.n_records)
        .map(|i| {
            let t: f64 = rng.gen();
            let first = rng.gen_range(0..cfg.n_labels);
            let mut truth = vec![first];
            if rng.gen_bool(0.5) {
                let mut second = rng.gen_range(0..cfg.n_labels);
                while second == first {
                    second = rng.gen_range(0..cfg.n_labels);
                }
                truth.push(second);
            }
            let predictions = (0..cfg.n_apis)
                .map(|k| {
                    let p_hit = (skill(k) + 0.25 - 0.5 * t).clamp(0.05, 0.98);
                    let mut out = ScoredLabelSet::new();
                    for &l in &truth {
                        if rng.gen::<f64>() < p_hit {
                            let score = (p_hit + 0.1 * (rng.gen::<f64>() - 0.5)).clamp(0.02, 1.0);
                            out.insert_max(labels[l].clone(), score);
                        }
                    }
                    if rng.gen::<f64>() < (1.0 - skill(k)) * 0.5 {
                        let mut wrong = rng.gen_range(0..cfg.n_labels);
                        while truth.contains(&wrong) {
                            wrong = rng.gen_range(0..cfg.n_labels);
                        }
                        let score = (0.3 + 0.2 * rng.gen::<f64>()).clamp(0.02, 1.0);
                        out.insert_max(labels[wrong].clone(), score);
                    }
                    out
                })
                .collect();
            Record {
                id: format!("r{i:05}"),
                truth: truth.iter().map(|&l| labels[l].clone()).collect(),
                predictions,
            }
        })
        .collect();

    let dataset = Dataset::new(records, names)?;
    let table = CostTable::new(costs, 0)?;
    Ok((dataset, table))
}

/// Random unit-scale embedding per label, for exercising the unbounded
/// featurization path.
pub fn synth_embeddings(labels: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    assert!(dim > 0, "embeddings need at least one dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let map: BTreeMap<String, Vec<f64>> = labels
        .iter()
        .map(|l| {
            let v = (0..dim)
                .map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            (l.clone(), v)
        })
        .collect();
    EmbeddingTable::new(map).expect("generated embeddings share one dimension")
}
