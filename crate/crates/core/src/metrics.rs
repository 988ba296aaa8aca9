//! Set-overlap metrics for judging predicted label sets against the truth.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jaccard similarity |truth ∩ pred| / |truth ∪ pred|.
///
/// Two empty sets agree on "no labels" and score 1.0; an empty prediction
/// against a non-empty truth scores 0.0.
pub fn multilabel_accuracy(truth: &BTreeSet<String>, pred: &BTreeSet<String>) -> f64 {
    if truth.is_empty() && pred.is_empty() {
        return 1.0;
    }
    let inter = truth.intersection(pred).count();
    let union = truth.len() + pred.len() - inter;
    inter as f64 / union as f64
}

/// The pluggable label-set metric. Jaccard is the default everywhere.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Jaccard,
    F1,
    Precision,
}

impl Metric {
    pub fn score(&self, truth: &BTreeSet<String>, pred: &BTreeSet<String>) -> f64 {
        match self {
            Metric::Jaccard => multilabel_accuracy(truth, pred),
            Metric::F1 => {
                if truth.is_empty() && pred.is_empty() {
                    return 1.0;
                }
                let inter = truth.intersection(pred).count();
                2.0 * inter as f64 / (truth.len() + pred.len()) as f64
            }
            Metric::Precision => {
                if pred.is_empty() {
                    return if truth.is_empty() { 1.0 } else { 0.0 };
                }
                let inter = truth.intersection(pred).count();
                inter as f64 / pred.len() as f64
            }
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Metric::Jaccard => "jaccard",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
        };
        f.write_str(name)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaccard" => Ok(Metric::Jaccard),
            "f1" => Ok(Metric::F1),
            "precision" => Ok(Metric::Precision),
            other => Err(Error::InvalidInput(format!(
                "unknown metric {other:?} (expected jaccard, f1, or precision)"
            ))),
        }
    }
}

/// Per-label precision and recall over (truth, predicted) pairs.
///
/// A label's precision is TP/(TP+FP) and recall TP/(TP+FN); zero denominators
/// report 0. Every label appearing on either side gets an entry.
pub fn precision_recall_per_label(
    pairs: &[(BTreeSet<String>, BTreeSet<String>)],
) -> Result<BTreeMap<String, (f64, f64)>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("label pairs"));
    }
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<&str, usize> = BTreeMap::new();
    for (truth, pred) in pairs {
        for label in pred {
            if truth.contains(label) {
                *tp.entry(label).or_default() += 1;
            } else {
                *fp.entry(label).or_default() += 1;
            }
        }
        for label in truth {
            if !pred.contains(label) {
                *fn_.entry(label).or_default() += 1;
            }
        }
    }
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    labels.extend(tp.keys());
    labels.extend(fp.keys());
    labels.extend(fn_.keys());
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(labels
        .into_iter()
        .map(|label| {
            let t = tp.get(label).copied().unwrap_or(0);
            let p = ratio(t, t + fp.get(label).copied().unwrap_or(0));
            let r = ratio(t, t + fn_.get(label).copied().unwrap_or(0));
            (label.to_owned(), (p, r))
        })
        .collect())
}
