//! Offline fractional assignment and its integral rounding.
//!
//! The fractional relaxation of the assignment problem is solved through its
//! dual price: at the solved price every row's preferred services are known,
//! and rows with several equally-preferred services at different costs are
//! exactly the rows the budget can push between. Filling the leftover budget
//! through those tied rows in index order reconstructs an optimal fractional
//! solution with at most one genuinely fractional row, which rounding then
//! demotes to the base service.

use super::dual::solve_dual_price;
use super::SelectionInstance;
use crate::error::{Error, Result};

/// Fractional optimum in matrix form plus the price that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Row-stochastic N x K assignment weights.
    pub z: Vec<Vec<f64>>,
    /// Mean accuracy of the fractional assignment.
    pub objective: f64,
    /// The dual price the assignment was built at.
    pub dual_price: f64,
    /// Rows with more than one nonzero weight; at most one by construction.
    pub fractional_rows: Vec<usize>,
}

/// Two reduced values within this distance count as tied at the solved price.
const TIE_EPS: f64 = 1e-9;

/// Solves the relaxed assignment exactly and rounds any fractional row down
/// to the base service. The integral output never exceeds the budget.
pub fn offline_strategy(instance: &SelectionInstance) -> Result<(Vec<usize>, LpSolution)> {
    let costs = instance.costs();
    let n = instance.len();
    let k = instance.n_apis();
    let b_hat = costs.hatted_budget(instance.budget());
    if b_hat < 0.0 {
        return Err(Error::Infeasible(format!(
            "budget {} is below the base service cost {}",
            instance.budget(),
            costs.base_cost()
        )));
    }
    let price = solve_dual_price(instance, b_hat)?;

    // Cheapest preferred choice per row, plus the tied upgrade target where
    // several services share the row's best reduced value at this price.
    let mut assignments = Vec::with_capacity(n);
    let mut upgrades: Vec<(usize, usize, usize)> = Vec::new(); // (row, from, to)
    for (i, row) in instance.rows().iter().enumerate() {
        let acc = row.values();
        let mut best_value = f64::NEG_INFINITY;
        for j in 0..k {
            best_value = best_value.max(acc[j] - price * costs.hatted_cost(j));
        }
        let mut cheap = usize::MAX;
        let mut rich = usize::MAX;
        for j in 0..k {
            if acc[j] - price * costs.hatted_cost(j) >= best_value - TIE_EPS {
                if cheap == usize::MAX || costs.hatted_cost(j) < costs.hatted_cost(cheap) {
                    cheap = j;
                }
                if rich == usize::MAX || costs.hatted_cost(j) > costs.hatted_cost(rich) {
                    rich = j;
                }
            }
        }
        assignments.push(cheap);
        if costs.hatted_cost(rich) > costs.hatted_cost(cheap) {
            upgrades.push((i, cheap, rich));
        }
    }

    let mut z: Vec<Vec<f64>> = assignments
        .iter()
        .map(|&j| {
            let mut row = vec![0.0; k];
            row[j] = 1.0;
            row
        })
        .collect();
    let mut fractional_rows = Vec::new();

    // The cheapest-choice spend is feasible by the price's definition; spend
    // the leftover on tied rows, whose upgrades all trade cost for accuracy
    // at exactly the solved price, so any fill order is optimal. Price zero
    // means upgrades buy nothing; skip them and keep the minimal spend.
    if price > 0.0 {
        let bound = b_hat * n as f64;
        let mut total: f64 = assignments.iter().map(|&j| costs.hatted_cost(j)).sum();
        for (i, from, to) in upgrades {
            let step = costs.hatted_cost(to) - costs.hatted_cost(from);
            let remaining = bound - total;
            if remaining <= 0.0 {
                break;
            }
            if step <= remaining {
                assignments[i] = to;
                z[i][from] = 0.0;
                z[i][to] = 1.0;
                total += step;
            } else {
                let f = remaining / step;
                z[i][from] = 1.0 - f;
                z[i][to] = f;
                fractional_rows.push(i);
                break;
            }
        }
    }

    let mut objective = 0.0;
    for (row, zr) in instance.rows().iter().zip(&z) {
        for (a, w) in row.values().iter().zip(zr) {
            objective += a * w;
        }
    }
    objective /= n as f64;

    // certificate: the fractional value must meet its dual upper bound
    if cfg!(debug_assertions) {
        let mut dual_value = b_hat * price;
        for row in instance.rows() {
            let acc = row.values();
            let q = (0..k)
                .map(|j| acc[j] - price * costs.hatted_cost(j))
                .fold(f64::NEG_INFINITY, f64::max);
            dual_value += q / n as f64;
        }
        debug_assert!(
            (objective - dual_value).abs() <= 1e-6,
            "fractional value {objective} drifted from its dual bound {dual_value}"
        );
    }

    for &i in &fractional_rows {
        assignments[i] = costs.base();
    }

    Ok((
        assignments,
        LpSolution {
            z,
            objective,
            dual_price: price,
            fractional_rows,
        },
    ))
}
