//! Merges the base service's labels with a chosen add-on's labels.
//!
//! A label's combined score is `w * base_score + (1 - w) * addon_score`,
//! where a label missing from one side scores 0 there. Labels whose combined
//! score exceeds theta (strictly) survive. When the chosen service is the
//! base itself, only the threshold applies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::types::{AccuracyVector, Record, ScoredLabelSet};

/// Mixing weight and decision threshold for one (base, add-on) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerParams {
    /// Weight on the base score, in [0, 1].
    pub w: f64,
    /// Combined scores must exceed this (strictly) to keep the label.
    pub theta: f64,
}

/// Union of both label sets with convex-combined scores.
pub fn combine_scores(base: &ScoredLabelSet, addon: &ScoredLabelSet, w: f64) -> ScoredLabelSet {
    debug_assert!((0.0..=1.0).contains(&w), "weight must be in [0, 1]");
    let mut out = ScoredLabelSet::new();
    for (label, s) in base.iter() {
        let combined = w * s + (1.0 - w) * addon.score(label).unwrap_or(0.0);
        out.insert_max(label.to_owned(), combined);
    }
    for (label, s) in addon.iter() {
        if !base.contains(label) {
            out.insert_max(label.to_owned(), (1.0 - w) * s);
        }
    }
    out
}

/// Keeps labels scoring strictly above theta. Theta 0 keeps every label with
/// a positive score; theta 1 keeps nothing.
pub fn apply_threshold(scored: &ScoredLabelSet, theta: f64) -> BTreeSet<String> {
    scored
        .iter()
        .filter(|(_, s)| *s > theta)
        .map(|(l, _)| l.to_owned())
        .collect()
}

/// Final label set for a record when service k is the one called.
pub fn combine_and_predict(
    record: &Record,
    base: usize,
    k: usize,
    params: CombinerParams,
) -> BTreeSet<String> {
    let base_set = &record.predictions[base];
    if k == base {
        apply_threshold(base_set, params.theta)
    } else {
        apply_threshold(
            &combine_scores(base_set, &record.predictions[k], params.w),
            params.theta,
        )
    }
}

/// Exhaustive (grid+1)^2 search for the (w, theta) maximizing the mean metric
/// of the combined output for service k. Ties prefer smaller theta, then
/// smaller w, so results do not depend on evaluation order.
pub fn tune_combiner(
    records: &[Record],
    base: usize,
    k: usize,
    grid: usize,
    metric: Metric,
) -> Result<CombinerParams> {
    if records.is_empty() {
        return Err(Error::EmptyInput("training records"));
    }
    let n_apis = records[0].n_apis();
    if base >= n_apis || k >= n_apis {
        return Err(Error::ApiIndexOutOfRange {
            index: base.max(k),
            len: n_apis,
        });
    }
    let step = |i: usize| {
        if grid == 0 {
            0.0
        } else {
            i as f64 / grid as f64
        }
    };
    let mut best: Option<(f64, CombinerParams)> = None;
    for ti in 0..=grid {
        for wi in 0..=grid {
            let params = CombinerParams {
                w: step(wi),
                theta: step(ti),
            };
            let mean = records
                .iter()
                .map(|r| metric.score(&r.truth, &combine_and_predict(r, base, k, params)))
                .sum::<f64>()
                / records.len() as f64;
            // strict improvement only: theta-major, w-minor iteration makes
            // the first maximizer the tie-broken winner
            match best {
                Some((b, _)) if mean <= b => {}
                _ => best = Some((mean, params)),
            }
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Measured accuracy each service would achieve on this record, combining
/// with its tuned parameters. Entry k uses params[k].
pub fn true_accuracy_vector(
    record: &Record,
    base: usize,
    params: &[CombinerParams],
    metric: Metric,
) -> AccuracyVector {
    let values = (0..record.n_apis())
        .map(|k| metric.score(&record.truth, &combine_and_predict(record, base, k, params[k])))
        .collect();
    AccuracyVector::new(values)
}
