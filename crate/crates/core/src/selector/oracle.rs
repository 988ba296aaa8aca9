//! Exact reference solvers for the integral assignment problem.
//!
//! Two independent paths: exhaustive enumeration for tiny instances, and a
//! multiple-choice knapsack dynamic program for costs on a decimal grid.
//! Both return the true integer optimum; they exist to check the fast
//! solvers against, not to be fast themselves.

use super::SelectionInstance;
use crate::error::{Error, Result};

/// Assignment count cap for the exhaustive path.
const EXHAUSTIVE_CAP: f64 = 2e7;
/// Cell cap for the dynamic-program table.
const DP_CELL_CAP: f64 = 5e7;
/// Largest scaled integer cost the dynamic program accepts.
const DP_COST_CAP: f64 = 1e5;

/// Exact optimum, trying the dynamic program first and falling back to
/// enumeration when the costs do not sit on a decimal grid.
pub fn brute_force_ilp(instance: &SelectionInstance) -> Result<(Vec<usize>, f64)> {
    match brute_force_ilp_dp(instance) {
        Err(Error::InstanceTooLarge(_)) => brute_force_ilp_exhaustive(instance),
        other => other,
    }
}

/// Enumerates every assignment, pruning branches already over budget.
///
/// The budget test allows 1e-9 slack, so the reported optimum is never below
/// the true one.
pub fn brute_force_ilp_exhaustive(instance: &SelectionInstance) -> Result<(Vec<usize>, f64)> {
    let n = instance.len();
    let k = instance.n_apis();
    if (k as f64).powi(n as i32) > EXHAUSTIVE_CAP {
        return Err(Error::InstanceTooLarge(format!(
            "{k}^{n} assignments exceeds the enumeration cap"
        )));
    }
    let costs = instance.costs();
    let bound = n as f64 * costs.hatted_budget(instance.budget());
    let mut current = vec![0usize; n];
    let mut best_value = f64::NEG_INFINITY;
    let mut best = vec![0usize; n];
    // depth-first over rows; value accumulates left to right so equal-value
    // assignments resolve to the first one found, i.e. lexicographically by
    // service index
    fn dfs(
        instance: &SelectionInstance,
        bound: f64,
        i: usize,
        spend: f64,
        value: f64,
        current: &mut [usize],
        best_value: &mut f64,
        best: &mut [usize],
    ) {
        if i == instance.len() {
            if value > *best_value {
                *best_value = value;
                best.copy_from_slice(current);
            }
            return;
        }
        let costs = instance.costs();
        let row = instance.rows()[i].values();
        for k in 0..instance.n_apis() {
            let next_spend = spend + costs.hatted_cost(k);
            if next_spend > bound + 1e-9 {
                continue;
            }
            current[i] = k;
            dfs(
                instance,
                bound,
                i + 1,
                next_spend,
                value + row[k],
                current,
                best_value,
                best,
            );
        }
    }
    dfs(
        instance,
        bound,
        0,
        0.0,
        0.0,
        &mut current,
        &mut best_value,
        &mut best,
    );
    debug_assert!(best_value.is_finite(), "base-only assignment always fits");
    Ok((best, best_value / n as f64))
}

/// Multiple-choice knapsack dynamic program over integerized costs.
///
/// Applicable when every add-on cost times some power of ten up to 1e4 lands
/// on an integer (within 1e-6), which is exact for decimal price lists with
/// at most four places.
pub fn brute_force_ilp_dp(instance: &SelectionInstance) -> Result<(Vec<usize>, f64)> {
    let n = instance.len();
    let k = instance.n_apis();
    let costs = instance.costs();
    if k > u8::MAX as usize {
        return Err(Error::InstanceTooLarge(format!(
            "{k} services exceeds the choice-table width"
        )));
    }
    let hatted: Vec<f64> = (0..k).map(|j| costs.hatted_cost(j)).collect();
    let scale = [1.0, 10.0, 100.0, 1000.0, 10000.0]
        .into_iter()
        .find(|s| hatted.iter().all(|c| (c * s - (c * s).round()).abs() <= 1e-6))
        .ok_or_else(|| {
            Error::InstanceTooLarge("costs do not sit on a supported decimal grid".into())
        })?;
    let scaled: Vec<usize> = hatted.iter().map(|c| (c * scale).round() as usize).collect();
    if scaled.iter().any(|&w| w as f64 > DP_COST_CAP) {
        return Err(Error::InstanceTooLarge(
            "scaled costs exceed the knapsack grid cap".into(),
        ));
    }
    let b_hat = costs.hatted_budget(instance.budget());
    // capping capacity at the costliest assignment keeps the table small
    // when the budget is unbinding
    let richest: usize = scaled.iter().copied().max().unwrap_or(0) * n;
    let cap_budget = (n as f64 * b_hat * scale + 1e-6).floor();
    let cap = if cap_budget >= richest as f64 {
        richest
    } else {
        cap_budget as usize
    };
    if (n as f64) * (cap as f64 + 1.0) > DP_CELL_CAP {
        return Err(Error::InstanceTooLarge(format!(
            "knapsack table of {n} x {} cells exceeds the cap",
            cap + 1
        )));
    }
    let width = cap + 1;
    // dp[c] = best total accuracy over the rows seen so far with scaled
    // spend at most c; the base column has weight zero, so every capacity
    // stays reachable and dp is monotone in c
    let mut prev = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    let mut choice = vec![0u8; n * width];
    for (i, row) in instance.rows().iter().enumerate() {
        let acc = row.values();
        for c in 0..width {
            let mut best_k = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for j in 0..k {
                let w = scaled[j];
                if w <= c {
                    let v = prev[c - w] + acc[j];
                    if v > best_v {
                        best_v = v;
                        best_k = j;
                    }
                }
            }
            next[c] = best_v;
            choice[i * width + c] = best_k as u8;
        }
        std::mem::swap(&mut prev, &mut next);
    }
    let objective = prev[cap] / n as f64;
    let mut c = cap;
    let mut assignments = vec![0usize; n];
    for i in (0..n).rev() {
        let j = choice[i * width + c] as usize;
        assignments[i] = j;
        c -= scaled[j];
    }
    Ok((assignments, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AccuracyVector, CostTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(rows: Vec<Vec<f64>>, costs: Vec<f64>, base: usize, budget: f64) -> SelectionInstance {
        SelectionInstance::new(
            rows.into_iter().map(AccuracyVector::new).collect(),
            CostTable::new(costs, base).unwrap(),
            budget,
        )
        .unwrap()
    }

    #[test]
    fn single_row_ample_budget_picks_the_argmax() {
        let inst = instance(vec![vec![0.3, 0.9]], vec![0.0, 1.0], 0, 2.0);
        let (a, obj) = brute_force_ilp(&inst).unwrap();
        assert_eq!(a, vec![1]);
        assert_eq!(obj, 0.9);
        let (ae, oe) = brute_force_ilp_exhaustive(&inst).unwrap();
        assert_eq!((ae, oe), (vec![1], 0.9));
    }

    #[test]
    fn two_row_budget_affords_one_upgrade() {
        // spend 1 fits only one paid call; row 0's gain is larger
        let inst = instance(
            vec![vec![0.2, 0.9], vec![0.2, 0.3]],
            vec![0.0, 1.0],
            0,
            0.5,
        );
        let (a, obj) = brute_force_ilp_exhaustive(&inst).unwrap();
        assert_eq!(a, vec![1, 0]);
        assert!((obj - 0.55).abs() < 1e-12, "objective {obj}");
        let (ad, od) = brute_force_ilp_dp(&inst).unwrap();
        assert_eq!(ad, vec![1, 0]);
        assert!((od - obj).abs() < 1e-12);
    }

    #[test]
    fn oracle_paths_agree_on_random_decimal_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let n = rng.gen_range(3..8);
            let k = rng.gen_range(2..4);
            let base = rng.gen_range(0..k);
            let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0..300) as f64 / 100.0).collect();
            let table = CostTable::new(costs, base).unwrap();
            let budget = table.base_cost() + rng.gen_range(0..250) as f64 / 100.0;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..k).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let inst = SelectionInstance::new(
                rows.into_iter().map(AccuracyVector::new).collect(),
                table.clone(),
                budget,
            )
            .unwrap();
            let (ae, oe) = brute_force_ilp_exhaustive(&inst).unwrap();
            let (ad, od) = brute_force_ilp_dp(&inst).unwrap();
            assert!(
                (oe - od).abs() <= 1e-12,
                "trial {trial}: exhaustive {oe} vs dp {od}"
            );
            let bound = inst.len() as f64 * table.hatted_budget(budget);
            for a in [&ae, &ad] {
                let spend: f64 = a.iter().map(|&j| table.hatted_cost(j)).sum();
                assert!(spend <= bound + 1e-9, "trial {trial}: spend {spend}");
                assert_eq!(a.len(), inst.len());
            }
        }
    }

    #[test]
    fn off_grid_costs_fall_back_to_enumeration() {
        let inst = instance(
            vec![vec![0.2, 0.9], vec![0.4, 0.5]],
            vec![0.0, 1.0 / 3.0],
            0,
            0.4,
        );
        assert!(matches!(
            brute_force_ilp_dp(&inst),
            Err(Error::InstanceTooLarge(_))
        ));
        let (a, obj) = brute_force_ilp(&inst).unwrap();
        let (ae, oe) = brute_force_ilp_exhaustive(&inst).unwrap();
        assert_eq!(a, ae);
        assert_eq!(obj, oe);
    }

    #[test]
    fn instances_too_large_for_both_paths_error_out() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![0.2, (i as f64 / 40.0).min(1.0)]).collect();
        let inst = instance(rows, vec![0.0, 1.0 / 3.0], 0, 0.2);
        assert!(matches!(
            brute_force_ilp(&inst),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn degenerate_all_free_costs_pick_row_argmax() {
        let inst = instance(
            vec![vec![0.2, 0.9], vec![0.8, 0.1]],
            vec![0.0, 0.0],
            0,
            0.0,
        );
        let (a, obj) = brute_force_ilp(&inst).unwrap();
        assert_eq!(a, vec![1, 0]);
        assert!((obj - 0.85).abs() < 1e-12);
    }
}
