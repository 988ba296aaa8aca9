//! Multi-output regression forest trained on bootstrap samples.
//!
//! Standard CART growth: each node tries a random subset of features, splits
//! where the summed per-output squared error of the two children is smallest,
//! and stops when a node is too small, too deep, or pure. Leaves store the
//! mean target vector of their samples. Everything is seeded and sequential,
//! so a (features, targets, hyperparams, seed) tuple always yields the same
//! model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AccuracyModel, FeatureVector};
use crate::error::{Error, Result};
use crate::types::AccuracyVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// None grows until nodes are pure or below the size floor.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// None means ceil(sqrt(d)).
    pub features_per_split: Option<usize>,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 5,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        /// Values <= threshold go left. The threshold is the largest feature
        /// value on the left side, so routing is float-exact.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_outputs: usize,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    pub fn predict(&self, features: &[f64]) -> Result<AccuracyVector> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        let mut acc = vec![0.0; self.n_outputs];
        for tree in &self.trees {
            let mut node = tree;
            loop {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        node = if features[*feature] <= *threshold {
                            left
                        } else {
                            right
                        };
                    }
                    TreeNode::Leaf { value } => {
                        for (a, v) in acc.iter_mut().zip(value) {
                            *a += v;
                        }
                        break;
                    }
                }
            }
        }
        let scale = 1.0 / self.trees.len() as f64;
        for a in &mut acc {
            *a *= scale;
        }
        Ok(AccuracyVector::clamped(acc))
    }
}

pub fn fit_forest(
    features: &[FeatureVector],
    targets: &[AccuracyVector],
    hp: &ForestHyperparams,
    seed: u64,
) -> Result<AccuracyModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput("training features"));
    }
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    if hp.n_trees == 0 || hp.min_samples_leaf == 0 {
        return Err(Error::InvalidInput(
            "forest needs n_trees >= 1 and min_samples_leaf >= 1".into(),
        ));
    }
    let d = features[0].values.len();
    let k = targets[0].len();
    if d == 0 || k == 0 {
        return Err(Error::InvalidInput(
            "features and targets must have positive dimension".into(),
        ));
    }
    let scheme = features[0].scheme;
    for f in features {
        if f.values.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.values.len(),
            });
        }
        if f.scheme != scheme {
            return Err(Error::InvalidInput(
                "mixed featurization schemes in one training set".into(),
            ));
        }
    }
    for t in targets {
        if t.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: t.len(),
            });
        }
    }
    let x: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let y: Vec<&[f64]> = targets.iter().map(|t| t.values()).collect();
    let mtry = hp
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(hp.n_trees);
    for _ in 0..hp.n_trees {
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        trees.push(grow(&x, &y, sample, 0, hp, mtry, &mut rng));
    }
    Ok(AccuracyModel::Forest(ForestModel {
        n_features: d,
        n_outputs: k,
        trees,
    }))
}

fn leaf(y: &[&[f64]], idx: &[usize]) -> TreeNode {
    let k = y[0].len();
    let mut value = vec![0.0; k];
    for &i in idx {
        for (v, t) in value.iter_mut().zip(y[i]) {
            *v += t;
        }
    }
    let scale = 1.0 / idx.len() as f64;
    for v in &mut value {
        *v *= scale;
    }
    TreeNode::Leaf { value }
}

fn grow(
    x: &[&[f64]],
    y: &[&[f64]],
    idx: Vec<usize>,
    depth: usize,
    hp: &ForestHyperparams,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let n = idx.len();
    let at_depth_limit = hp.max_depth.is_some_and(|m| depth >= m);
    if n < 2 * hp.min_samples_leaf || at_depth_limit || idx.iter().all(|&i| y[i] == y[idx[0]]) {
        return leaf(y, &idx);
    }
    let d = x[0].len();
    let k = y[0].len();

    // totals over the node, reused for every candidate feature
    let mut total_sum = vec![0.0; k];
    let mut total_sq = 0.0;
    for &i in &idx {
        for (s, t) in total_sum.iter_mut().zip(y[i]) {
            *s += t;
        }
        total_sq += y[i].iter().map(|t| t * t).sum::<f64>();
    }

    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    let mut ord = idx.clone();
    let mut left_sum = vec![0.0; k];
    for feature in rand::seq::index::sample(rng, d, mtry) {
        ord.sort_unstable_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        left_sum.iter_mut().for_each(|s| *s = 0.0);
        let mut left_sq = 0.0;
        for pos in 1..n {
            let prev = ord[pos - 1];
            for (s, t) in left_sum.iter_mut().zip(y[prev]) {
                *s += t;
            }
            left_sq += y[prev].iter().map(|t| t * t).sum::<f64>();
            if x[prev][feature] == x[ord[pos]][feature] {
                continue;
            }
            if pos < hp.min_samples_leaf || n - pos < hp.min_samples_leaf {
                continue;
            }
            // SSE = sum ||y||^2 - ||sum y||^2 / n, summed over both children
            let nl = pos as f64;
            let nr = (n - pos) as f64;
            let mut left_norm = 0.0;
            let mut right_norm = 0.0;
            for (s, t) in left_sum.iter().zip(&total_sum) {
                left_norm += s * s;
                let r = t - s;
                right_norm += r * r;
            }
            let sse = (left_sq - left_norm / nl) + ((total_sq - left_sq) - right_norm / nr);
            if best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, feature, x[prev][feature]));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return leaf(y, &idx);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i][feature] <= threshold);
    if left_idx.is_empty() || right_idx.is_empty() {
        // cannot happen with boundary-value thresholds; guard anyway
        let mut all = left_idx;
        all.extend(right_idx);
        return leaf(y, &all);
    }
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(grow(x, y, left_idx, depth + 1, hp, mtry, rng)),
        right: Box::new(grow(x, y, right_idx, depth + 1, hp, mtry, rng)),
    }
}
