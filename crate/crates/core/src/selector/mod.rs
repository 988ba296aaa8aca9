//! Decides which add-on service each item gets under an average budget.
//!
//! Everything here works on a [`SelectionInstance`]: an N x K matrix of
//! per-item service accuracies plus a cost table and a budget. The offline
//! path solves the fractional assignment exactly through its one-dimensional
//! dual and rounds it; the online path streams items once against a residual
//! budget using a price threshold estimated on training data.

mod dual;
mod offline;
mod online;
mod oracle;

pub use dual::{select_sp, solve_dual_price, spend_curve};
pub use offline::{offline_strategy, LpSolution};
pub use online::{
    estimate_p_hat, run_online, tune_delta, tune_delta_with, OnlinePolicy, DELTA_MAX, DELTA_MIN,
};
pub use oracle::{brute_force_ilp, brute_force_ilp_dp, brute_force_ilp_exhaustive};

use crate::error::{Error, Result};
use crate::types::{AccuracyVector, CostTable};

/// A concrete assignment problem: accuracy rows, prices, and a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInstance {
    rows: Vec<AccuracyVector>,
    costs: CostTable,
    budget: f64,
}

impl SelectionInstance {
    pub fn new(rows: Vec<AccuracyVector>, costs: CostTable, budget: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("selection instance rows"));
        }
        for r in &rows {
            if r.len() != costs.n_apis() {
                return Err(Error::DimensionMismatch {
                    expected: costs.n_apis(),
                    got: r.len(),
                });
            }
        }
        if !budget.is_finite() {
            return Err(Error::InvalidInput("budget must be finite".into()));
        }
        if costs.hatted_budget(budget) < 0.0 {
            return Err(Error::Infeasible(format!(
                "budget {budget} is below the base service cost {}",
                costs.base_cost()
            )));
        }
        Ok(Self { rows, costs, budget })
    }

    pub fn rows(&self) -> &[AccuracyVector] {
        &self.rows
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_apis(&self) -> usize {
        self.costs.n_apis()
    }

    /// Mean accuracy of an assignment under this instance's accuracy matrix.
    pub fn mean_accuracy(&self, assignments: &[usize]) -> f64 {
        debug_assert_eq!(assignments.len(), self.rows.len());
        let total: f64 = self
            .rows
            .iter()
            .zip(assignments)
            .map(|(row, &k)| row.get(k))
            .sum();
        total / self.rows.len() as f64
    }
}
