//! Single-pass selection against a residual budget.
//!
//! The online path fixes a price threshold before the stream starts and then
//! commits to one service per item as it arrives. The price is estimated on
//! training data against a budget shrunk by a buffer delta; the buffer
//! absorbs the mismatch between the training spend curve and the stream
//! actually served, and is tuned by replaying held-out data.

use super::dual::{select_sp, solve_dual_price};
use super::SelectionInstance;
use crate::error::{Error, Result};
use crate::types::{AccuracyVector, CostTable};

/// Floor for the budget buffer; negative tuning candidates clamp to this.
pub const DELTA_MIN: f64 = 1e-6;
/// Ceiling for the budget buffer.
pub const DELTA_MAX: f64 = 0.99;

/// Streaming selection state: a fixed price plus the budget left to spend.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlinePolicy {
    p_hat: f64,
    delta: f64,
    base: usize,
    residual_budget: f64,
}

impl OnlinePolicy {
    pub fn new(p_hat: f64, delta: f64, base: usize) -> Result<Self> {
        if !(p_hat.is_finite() && p_hat >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "price threshold {p_hat} must be finite and non-negative"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "budget buffer {delta} must lie strictly between 0 and 1"
            )));
        }
        Ok(Self {
            p_hat,
            delta,
            base,
            residual_budget: 0.0,
        })
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// Add-on budget still unspent; meaningful during and after a run.
    pub fn residual_budget(&self) -> f64 {
        self.residual_budget
    }
}

/// Price threshold fitted on training data with the budget shrunk by delta.
///
/// A delta of zero reproduces the offline price for the training instance;
/// positive values leave headroom for streams whose spend curve sits above
/// the training one.
pub fn estimate_p_hat(train: &SelectionInstance, budget: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "budget buffer {delta} must lie in [0, 1)"
        )));
    }
    let b_hat = train.costs().hatted_budget(budget);
    let effective = (1.0 - delta) * b_hat;
    if effective < 0.0 {
        return Err(Error::Infeasible(format!(
            "budget {budget} is below the base service cost {}",
            train.costs().base_cost()
        )));
    }
    solve_dual_price(train, effective)
}

/// Streams `n` items through the policy, spending add-on budget until the
/// next candidate no longer fits, then serving the base from there on.
///
/// Ids travel with their rows so callers can log choices per item. The run
/// is O(K) per item. The total add-on spend, re-summed over the returned
/// choices in stream order, never exceeds n times the per-item add-on
/// budget.
pub fn run_online<S, I>(
    stream: S,
    policy: &mut OnlinePolicy,
    n: usize,
    budget: f64,
    costs: &CostTable,
) -> Result<Vec<(I, usize)>>
where
    S: IntoIterator<Item = (I, AccuracyVector)>,
{
    if n == 0 {
        return Err(Error::EmptyInput("online stream"));
    }
    if policy.base != costs.base() {
        return Err(Error::InvalidInput(format!(
            "policy base {} disagrees with cost table base {}",
            policy.base,
            costs.base()
        )));
    }
    let b_hat = costs.hatted_budget(budget);
    if b_hat < 0.0 {
        return Err(Error::Infeasible(format!(
            "budget {budget} is below the base service cost {}",
            costs.base_cost()
        )));
    }
    let bound = n as f64 * b_hat;
    // the budget guard runs on the accumulated spend, not on a decremented
    // residual, so that re-summing the emitted costs in stream order can
    // never exceed the bound even after float rounding
    let mut spent = 0.0f64;
    policy.residual_budget = bound;
    let mut out = Vec::with_capacity(n);
    let mut got = 0usize;
    for (id, row) in stream {
        got += 1;
        if got > n {
            continue; // keep draining so the error reports the true length
        }
        if row.len() != costs.n_apis() {
            return Err(Error::DimensionMismatch {
                expected: costs.n_apis(),
                got: row.len(),
            });
        }
        let candidate = select_sp(&row, policy.p_hat, costs);
        let chosen = if candidate == policy.base {
            policy.base
        } else {
            let c = costs.hatted_cost(candidate);
            if spent + c <= bound {
                spent += c;
                policy.residual_budget = bound - spent;
                candidate
            } else {
                policy.base
            }
        };
        out.push((id, chosen));
    }
    if got != n {
        return Err(Error::StreamLength { expected: n, got });
    }
    Ok(out)
}

/// Tunes the budget buffer by replaying candidate buffers on validation data.
///
/// Candidates are alpha * ln(N) / N for alpha in -10..=10, clamped to
/// [`DELTA_MIN`], [`DELTA_MAX`]; N is the validation size. Accuracy ties go
/// to the larger buffer, the safer choice.
pub fn tune_delta(train: &SelectionInstance, val: &SelectionInstance, budget: f64) -> Result<f64> {
    let alphas: Vec<i32> = (-10..=10).collect();
    tune_delta_with(train, val, budget, None, &alphas)
}

/// [`tune_delta`] with explicit knobs: `eval`, when given, supplies the
/// accuracy credited per validation row (the rows themselves still drive
/// selection), and `alphas` overrides the candidate grid.
pub fn tune_delta_with(
    train: &SelectionInstance,
    val: &SelectionInstance,
    budget: f64,
    eval: Option<&[AccuracyVector]>,
    alphas: &[i32],
) -> Result<f64> {
    let n = val.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "buffer tuning needs at least 2 validation items".into(),
        ));
    }
    if alphas.is_empty() {
        return Err(Error::EmptyInput("buffer candidate grid"));
    }
    if let Some(rows) = eval {
        if rows.len() != n {
            return Err(Error::StreamLength {
                expected: n,
                got: rows.len(),
            });
        }
        for row in rows {
            if row.len() != val.n_apis() {
                return Err(Error::DimensionMismatch {
                    expected: val.n_apis(),
                    got: row.len(),
                });
            }
        }
    }
    let nf = n as f64;
    let mut deltas: Vec<f64> = {
        let mut sorted = alphas.to_vec();
        sorted.sort_unstable();
        sorted
            .into_iter()
            .map(|alpha| (alpha as f64 * nf.ln() / nf).clamp(DELTA_MIN, DELTA_MAX))
            .collect()
    };
    deltas.dedup();
    let mut best: Option<(f64, f64)> = None; // (accuracy, delta)
    for delta in deltas {
        let p_hat = estimate_p_hat(train, budget, delta)?;
        let mut policy = OnlinePolicy::new(p_hat, delta, val.costs().base())?;
        let stream = val.rows().iter().cloned().enumerate();
        // the residual guard keeps every replay within budget, so candidates
        // are ranked by accuracy alone
        let picks = run_online(stream, &mut policy, n, budget, val.costs())?;
        let mut acc = 0.0;
        for (i, k) in &picks {
            let row = match eval {
                Some(rows) => &rows[*i],
                None => &val.rows()[*i],
            };
            acc += row.get(*k);
        }
        acc /= nf;
        let better = match best {
            None => true,
            Some((best_acc, best_delta)) => {
                acc > best_acc || (acc == best_acc && delta >= best_delta)
            }
        };
        if better {
            best = Some((acc, delta));
        }
    }
    Ok(best.expect("candidate grid is non-empty").1)
}
