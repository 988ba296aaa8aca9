//! The price-threshold strategy family and its budget dual.
//!
//! For a price p, each item independently picks the service maximizing
//! accuracy minus p times marginal cost. The mean spend of that rule is a
//! non-increasing step function of p, so the budget-optimal price is the
//! smallest step where spend fits. That price is also the minimizer of the
//! assignment LP's one-dimensional dual, which is what makes the offline
//! solver exact.

use super::SelectionInstance;
use crate::error::{Error, Result};
use crate::types::{AccuracyVector, CostTable};

/// Picks argmax_k acc[k] - p * hatted_cost(k). Exact value ties go to the
/// cheaper service, and cost ties to the smaller index.
pub fn select_sp(row: &AccuracyVector, p: f64, costs: &CostTable) -> usize {
    select_sp_values(row.values(), p, costs)
}

pub(crate) fn select_sp_values(row: &[f64], p: f64, costs: &CostTable) -> usize {
    debug_assert!(p >= 0.0, "price must be non-negative");
    debug_assert_eq!(row.len(), costs.n_apis());
    let mut best = 0usize;
    let mut best_value = row[0] - p * costs.hatted_cost(0);
    for k in 1..row.len() {
        let value = row[k] - p * costs.hatted_cost(k);
        if value > best_value
            || (value == best_value && costs.hatted_cost(k) < costs.hatted_cost(best))
        {
            best = k;
            best_value = value;
        }
    }
    best
}

/// Mean add-on spend per item if every row were selected at price p.
pub fn spend_curve(instance: &SelectionInstance, p: f64) -> f64 {
    let costs = instance.costs();
    let total: f64 = instance
        .rows()
        .iter()
        .map(|row| costs.hatted_cost(select_sp_values(row.values(), p, costs)))
        .sum();
    total / instance.len() as f64
}

/// Number of breakpoint candidates below which the exact path is used.
const EXACT_BREAKPOINT_BUDGET: usize = 1_000_000;

/// Smallest price p >= 0 whose spend fits the effective budget.
///
/// spend_curve only changes value where two services swap rank, i.e. at
/// p = (acc_k - acc_j) / (cost_k - cost_j) for some row; enumerating those
/// breakpoints and binary-searching them is exact. Instances with more than
/// a million candidate breakpoints fall back to bisection at 1e-9 absolute
/// tolerance.
pub fn solve_dual_price(instance: &SelectionInstance, effective_budget: f64) -> Result<f64> {
    if !(effective_budget >= 0.0) {
        return Err(Error::Infeasible(format!(
            "effective budget {effective_budget} is negative"
        )));
    }
    if spend_curve(instance, 0.0) <= effective_budget {
        return Ok(0.0);
    }
    let k = instance.n_apis();
    if instance.len().saturating_mul(k * k) <= EXACT_BREAKPOINT_BUDGET {
        solve_exact(instance, effective_budget)
    } else {
        Ok(solve_bisect(instance, effective_budget))
    }
}

/// A price at which every row prefers the base: above max 1/cost every paid
/// value is negative while the base keeps a non-negative accuracy.
fn forcing_price(costs: &CostTable) -> f64 {
    let min_paid = (0..costs.n_apis())
        .map(|j| costs.hatted_cost(j))
        .filter(|c| *c > 0.0)
        .fold(f64::INFINITY, f64::min);
    1.0 / min_paid + 1.0
}

/// Computed breakpoints can round to one ulp below the true crossing, where
/// the pricier service still wins by ~1e-16 and the spend drop is missed.
/// Feasibility is therefore probed a hair above each candidate.
fn nudge_up(p: f64) -> f64 {
    p + p.abs() * 1e-13
}

fn solve_exact(instance: &SelectionInstance, effective_budget: f64) -> Result<f64> {
    let costs = instance.costs();
    let k = instance.n_apis();
    let mut breakpoints = Vec::new();
    for row in instance.rows() {
        let acc = row.values();
        for j in 0..k {
            for l in (j + 1)..k {
                let cj = costs.hatted_cost(j);
                let cl = costs.hatted_cost(l);
                if cj == cl {
                    continue;
                }
                let p = (acc[l] - acc[j]) / (cl - cj);
                if p > 0.0 && p.is_finite() {
                    breakpoints.push(p);
                }
            }
        }
    }
    // sentinel guarantees the searched range contains a feasible price
    breakpoints.push(forcing_price(costs));
    breakpoints.sort_unstable_by(f64::total_cmp);
    breakpoints.dedup();
    // spend is non-increasing in p, so feasibility is monotone over the
    // sorted breakpoints and binary search applies
    let pos = breakpoints
        .partition_point(|&p| spend_curve(instance, nudge_up(p)) > effective_budget);
    let p = breakpoints
        .get(pos)
        .copied()
        .ok_or_else(|| Error::Infeasible("no feasible price threshold".into()))?;
    if spend_curve(instance, p) <= effective_budget {
        Ok(p)
    } else {
        Ok(nudge_up(p))
    }
}

fn solve_bisect(instance: &SelectionInstance, effective_budget: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = forcing_price(instance.costs());
    debug_assert!(spend_curve(instance, hi) <= effective_budget);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if spend_curve(instance, mid) <= effective_budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
