//! Offline search over candidate base services.
//!
//! The base choice shapes everything downstream: its outputs feed the
//! predictor, so an uninformative base leaves the selector unable to tell
//! easy items from hard ones. The search trains a complete strategy per
//! candidate and keeps the one that replays best on validation.

use std::collections::BTreeSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{replay_strategy, train_strategy, FeatureSpec, TrainOptions, TrainedStrategy};
use crate::types::CostTable;

/// One trained candidate: its validation replay numbers and the strategy
/// itself.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCandidate {
    pub base: usize,
    pub validation_accuracy: f64,
    /// Mean per-item cost of the validation replay.
    pub validation_cost: f64,
    pub strategy: TrainedStrategy,
}

/// Search results: candidates sorted by service index, winner by service
/// index. The winner attains the best validation accuracy; exact ties go to
/// the cheaper base, then the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSearchReport {
    pub candidates: Vec<BaseCandidate>,
    pub winner: usize,
}

impl BaseSearchReport {
    pub fn winning_strategy(&self) -> &TrainedStrategy {
        &self
            .candidates
            .iter()
            .find(|c| c.base == self.winner)
            .expect("winner is always one of the candidates")
            .strategy
    }
}

/// Trains a full strategy per candidate base and picks the validation-best.
///
/// Candidates costing more than the budget are skipped; it is an error if
/// that removes all of them. `opts` supplies the shared tuning knobs; its
/// `base` field is replaced per candidate and its `budget` by `budget`.
pub fn search_base(
    train: &Dataset,
    validation: &Dataset,
    costs: &CostTable,
    budget: f64,
    candidates: &[usize],
    features: &FeatureSpec,
    opts: &TrainOptions,
) -> Result<BaseSearchReport> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate base list"));
    }
    let k = costs.n_apis();
    let unique: BTreeSet<usize> = candidates.iter().copied().collect();
    if let Some(&bad) = unique.iter().find(|&&c| c >= k) {
        return Err(Error::ApiIndexOutOfRange { index: bad, len: k });
    }
    let feasible: Vec<usize> = unique
        .into_iter()
        .filter(|&c| costs.costs()[c] <= budget)
        .collect();
    if feasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "no candidate base costs at most the budget {budget}"
        )));
    }

    let mut results = Vec::with_capacity(feasible.len());
    for base in feasible {
        let mut cand_opts = opts.clone();
        cand_opts.base = base;
        cand_opts.budget = budget;
        let strategy = train_strategy(train, validation, costs, features, &cand_opts)?;
        let replay = replay_strategy(&strategy, validation, features, opts.metric)?;
        results.push(BaseCandidate {
            base,
            validation_accuracy: replay.mean_accuracy,
            validation_cost: replay.mean_cost,
            strategy,
        });
    }

    let mut winner = &results[0];
    for cand in &results[1..] {
        let better = cand.validation_accuracy > winner.validation_accuracy
            || (cand.validation_accuracy == winner.validation_accuracy
                && costs.costs()[cand.base] < costs.costs()[winner.base]);
        if better {
            winner = cand;
        }
    }
    let winner = winner.base;
    Ok(BaseSearchReport {
        candidates: results,
        winner,
    })
}
