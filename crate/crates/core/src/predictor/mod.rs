//! Predicts, from the base service's output alone, how accurate each
//! service's combined prediction would be on an item.

mod forest;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestHyperparams, ForestModel, TreeNode};

use crate::dataset::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::types::{AccuracyVector, ScoredLabelSet};

/// How raw label sets become numeric features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScheme {
    /// One slot per vocabulary label holding its score (0 when absent).
    OneHotBounded,
    /// Score-weighted sum of per-label embedding vectors.
    EmbeddingWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub scheme: FeatureScheme,
}

/// One-hot score vector over a fixed vocabulary; out-of-vocabulary labels
/// are dropped.
pub fn featurize_bounded(output: &ScoredLabelSet, vocabulary: &Vocabulary) -> FeatureVector {
    let mut values = vec![0.0; vocabulary.len()];
    for (label, score) in output.iter() {
        if let Some(i) = vocabulary.index_of(label) {
            values[i] = score;
        }
    }
    FeatureVector {
        values,
        scheme: FeatureScheme::OneHotBounded,
    }
}

/// Sum of embeddings weighted by label scores; labels without an embedding
/// are dropped, so an all-unknown output maps to the zero vector.
pub fn featurize_unbounded(output: &ScoredLabelSet, embeddings: &EmbeddingTable) -> FeatureVector {
    let mut values = vec![0.0; embeddings.dimension()];
    for (label, score) in output.iter() {
        if let Some(vector) = embeddings.get(label) {
            for (v, e) in values.iter_mut().zip(vector) {
                *v += score * e;
            }
        }
    }
    FeatureVector {
        values,
        scheme: FeatureScheme::EmbeddingWeighted,
    }
}

/// An accuracy predictor: either a trained forest or a constant mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyModel {
    Forest(ForestModel),
    Dummy { mean: Vec<f64> },
}

impl AccuracyModel {
    pub fn n_outputs(&self) -> usize {
        match self {
            AccuracyModel::Forest(f) => f.n_outputs,
            AccuracyModel::Dummy { mean } => mean.len(),
        }
    }

    /// Predictions are always clamped into [0, 1] per output.
    pub fn predict(&self, feature: &FeatureVector) -> Result<AccuracyVector> {
        match self {
            AccuracyModel::Forest(f) => f.predict(&feature.values),
            AccuracyModel::Dummy { mean } => Ok(AccuracyVector::clamped(mean.clone())),
        }
    }
}

/// Constant model returning the element-wise mean of the training targets.
pub fn fit_dummy(targets: &[AccuracyVector]) -> Result<AccuracyModel> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("training targets"));
    }
    let k = targets[0].len();
    let mut mean = vec![0.0; k];
    for t in targets {
        if t.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: t.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(t.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= targets.len() as f64;
    }
    Ok(AccuracyModel::Dummy { mean })
}

/// Root-mean-square error and Pearson correlation of a model against known
/// accuracy vectors, both over the flattened (item, service) pairs.
///
/// A model that predicts the same vector for every item has no usable
/// correlation; its PCC is defined as 0 (this also covers the constant-mean
/// model and avoids a zero-variance division).
pub fn evaluate_predictor(
    model: &AccuracyModel,
    features: &[FeatureVector],
    targets: &[AccuracyVector],
) -> Result<(f64, f64)> {
    if features.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    let mut preds = Vec::with_capacity(features.len());
    for (f, t) in features.iter().zip(targets) {
        let p = model.predict(f)?;
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: p.len(),
            });
        }
        preds.push(p);
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        for (a, b) in p.values().iter().zip(t.values()) {
            sq += (a - b) * (a - b);
            count += 1;
        }
    }
    let rmse = (sq / count as f64).sqrt();

    let constant = preds.windows(2).all(|w| w[0] == w[1]);
    let pcc = if constant {
        0.0
    } else {
        let xs: Vec<f64> = preds.iter().flat_map(|p| p.values().iter().copied()).collect();
        let ys: Vec<f64> = targets
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect();
        pearson(&xs, &ys)
    };
    Ok((rmse, pcc))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    let denom = (vx * vy).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        cov / denom
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: u32,
    #[serde(flatten)]
    model: AccuracyModel,
}

pub const MODEL_FORMAT: u32 = 1;

pub fn save_model(model: &AccuracyModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT,
        model: model.clone(),
    };
    let body = serde_json::to_string(&file).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<AccuracyModel> {
    let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&body)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::InvalidInput(format!(
            "unsupported model format {} (expected {MODEL_FORMAT})",
            file.format
        )));
    }
    Ok(file.model)
}
