//! Ensembles that call every service on every item.
//!
//! These are accuracy references, not budget strategies: each one reads all
//! K predictions, so its per-item cost is the whole price list. Majority
//! voting keeps labels most services agree on; the weighted variant scores
//! labels by how reliable each service proved on training data.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::metrics::multilabel_accuracy;
use crate::types::Record;

/// Per-service vote weights plus the acceptance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVoteParams {
    weights: Vec<f64>,
    threshold: f64,
}

impl WeightedVoteParams {
    pub fn new(weights: Vec<f64>, threshold: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("vote weights"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "vote weights must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidInput(format!(
                "vote threshold {threshold} must lie in [0, 1]"
            )));
        }
        Ok(Self { weights, threshold })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Keeps every label predicted, at any score, by at least half the services
/// (count >= ceil(K/2)).
pub fn majority_vote(record: &Record) -> BTreeSet<String> {
    let need = (record.n_apis() + 1) / 2;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for pred in &record.predictions {
        for label in pred.labels() {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c >= need)
        .map(|(l, _)| l.to_string())
        .collect()
}

/// Keeps every label whose weighted score sum strictly exceeds the
/// threshold. A service that did not predict a label contributes zero.
pub fn weighted_majority_vote(
    record: &Record,
    params: &WeightedVoteParams,
) -> Result<BTreeSet<String>> {
    if params.weights.len() != record.n_apis() {
        return Err(Error::DimensionMismatch {
            expected: params.weights.len(),
            got: record.n_apis(),
        });
    }
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for (w, pred) in params.weights.iter().zip(&record.predictions) {
        for (label, s) in pred.iter() {
            *scores.entry(label).or_insert(0.0) += w * s;
        }
    }
    Ok(scores
        .into_iter()
        .filter(|(_, s)| *s > params.threshold)
        .map(|(l, _)| l.to_string())
        .collect())
}

/// Mean set-overlap accuracy of each service's raw label set against the
/// truth; the conventional weights for [`weighted_majority_vote`].
pub fn api_accuracy_weights(records: &[Record]) -> Result<Vec<f64>> {
    let first = records
        .first()
        .ok_or(Error::EmptyInput("weight fitting records"))?;
    let k = first.n_apis();
    let mut sums = vec![0.0f64; k];
    for r in records {
        if r.n_apis() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: r.n_apis(),
            });
        }
        for (j, pred) in r.predictions.iter().enumerate() {
            let set: BTreeSet<String> = pred.labels().map(str::to_string).collect();
            sums[j] += multilabel_accuracy(&r.truth, &set);
        }
    }
    Ok(sums.into_iter().map(|s| s / records.len() as f64).collect())
}

/// Grid-searches thresholds m/resolution for m in 0..=resolution, keeping
/// the one with the best mean accuracy; ties go to the smaller threshold.
pub fn tune_vote_threshold(
    train: &[Record],
    weights: &[f64],
    resolution: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyInput("vote tuning records"));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput(
            "threshold grid needs at least one step".into(),
        ));
    }
    let mut best_theta = 0.0;
    let mut best_acc = f64::NEG_INFINITY;
    for m in 0..=resolution {
        let theta = m as f64 / resolution as f64;
        let params = WeightedVoteParams::new(weights.to_vec(), theta)?;
        let mut acc = 0.0;
        for r in train {
            let pred = weighted_majority_vote(r, &params)?;
            acc += multilabel_accuracy(&r.truth, &pred);
        }
        acc /= train.len() as f64;
        if acc > best_acc {
            best_acc = acc;
            best_theta = theta;
        }
    }
    Ok(best_theta)
}
