//! Shared domain types: scored label sets, records, cost tables, accuracy
//! vectors, and the cost accounting they imply.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A service's output for one item: labels with confidence scores in [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoredLabelSet {
    entries: BTreeMap<String, f64>,
}

impl ScoredLabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from (label, score) pairs. Duplicate labels keep the
    /// highest score; scores are clamped into [0, 1].
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut set = Self::new();
        for (label, score) in entries {
            set.insert_max(label.into(), score);
        }
        set
    }

    /// Inserts a label, keeping the larger score if it is already present.
    /// The score is clamped into [0, 1]; NaN scores are invariant violations.
    pub fn insert_max(&mut self, label: String, score: f64) {
        assert!(!score.is_nan(), "label score must not be NaN");
        let score = score.clamp(0.0, 1.0);
        let slot = self.entries.entry(label).or_insert(score);
        if score > *slot {
            *slot = score;
        }
    }

    pub fn score(&self, label: &str) -> Option<f64> {
        self.entries.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    /// Iterates labels in sorted order with their scores.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(l, s)| (l.as_str(), *s))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One logged item: the ground-truth label set plus every service's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub truth: BTreeSet<String>,
    /// One entry per service, aligned with the dataset's API order.
    pub predictions: Vec<ScoredLabelSet>,
}

impl Record {
    pub fn n_apis(&self) -> usize {
        self.predictions.len()
    }
}

/// Predicted or measured per-service accuracy for one item, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyVector(Vec<f64>);

impl AccuracyVector {
    /// Panics if any entry is outside [0, 1] or NaN; use [`Self::clamped`]
    /// for values coming out of a regression model.
    pub fn new(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| (0.0..=1.0).contains(v)),
            "accuracy values must lie in [0, 1]"
        );
        Self(values)
    }

    pub fn clamped(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-query price of each service, and which one is the base.
///
/// The base service is called on every item, so its marginal ("hatted") cost
/// is zero and budgets are tracked net of the unconditional base charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    costs: Vec<f64>,
    base: usize,
}

impl CostTable {
    pub fn new(costs: Vec<f64>, base: usize) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::EmptyInput("cost table"));
        }
        if base >= costs.len() {
            return Err(Error::ApiIndexOutOfRange {
                index: base,
                len: costs.len(),
            });
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(
                "service costs must be finite and non-negative".into(),
            ));
        }
        Ok(Self { costs, base })
    }

    pub fn n_apis(&self) -> usize {
        self.costs.len()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn cost(&self, k: usize) -> f64 {
        self.costs[k]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn base_cost(&self) -> f64 {
        self.costs[self.base]
    }

    /// Marginal cost of calling service k on top of the base: 0 for the base.
    pub fn hatted_cost(&self, k: usize) -> f64 {
        if k == self.base {
            0.0
        } else {
            self.costs[k]
        }
    }

    /// Budget left for add-on calls after the unconditional base charge.
    /// Negative means the budget cannot even cover the base.
    pub fn hatted_budget(&self, budget: f64) -> f64 {
        budget - self.costs[self.base]
    }

    pub fn max_hatted_cost(&self) -> f64 {
        (0..self.costs.len())
            .map(|k| self.hatted_cost(k))
            .fold(0.0, f64::max)
    }

    /// Rebinds the base index, keeping the same prices.
    pub fn with_base(&self, base: usize) -> Result<Self> {
        Self::new(self.costs.clone(), base)
    }
}

/// Average per-item spend of an assignment: the base price plus the mean
/// add-on price over items.
pub fn strategy_cost(assignments: &[usize], costs: &CostTable) -> Result<f64> {
    if assignments.is_empty() {
        return Err(Error::EmptyInput("assignments"));
    }
    let mut addon = 0.0;
    for &k in assignments {
        if k >= costs.n_apis() {
            return Err(Error::ApiIndexOutOfRange {
                index: k,
                len: costs.n_apis(),
            });
        }
        addon += costs.hatted_cost(k);
    }
    Ok(costs.base_cost() + addon / assignments.len() as f64)
}
