//! Ingestion of recorded prediction logs, cost tables, and label embeddings,
//! plus deterministic train/validation/test splitting.
//!
//! The log format is JSON-Lines, one item per line:
//! `{"id": "...", "truth": ["label", ...],
//!   "predictions": {"api": [["label", score], ...], ...}}`
//! Every line must list the same APIs; the dataset's API order is the sorted
//! key order of the first line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CostTable, Record, ScoredLabelSet};

/// Sorted universe of labels observed in a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    labels: Vec<String>,
}

impl Vocabulary {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort_unstable();
        labels.dedup();
        Self { labels }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A recorded log: every service's output for every item, plus ground truth.
///
/// The vocabulary is the sorted union of all labels seen anywhere in the log.
/// It is `None` only when the label space should be treated as unbounded, in
/// which case featurization must go through embeddings instead of one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    api_names: Vec<String>,
    vocabulary: Option<Vocabulary>,
}

impl Dataset {
    pub fn new(records: Vec<Record>, api_names: Vec<String>) -> Result<Self> {
        if api_names.len() < 2 {
            return Err(Error::InvalidInput(
                "a dataset needs at least 2 APIs (a base and one add-on)".into(),
            ));
        }
        for r in &records {
            if r.n_apis() != api_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: api_names.len(),
                    got: r.n_apis(),
                });
            }
        }
        let vocabulary = Some(vocabulary_of(&records));
        Ok(Self {
            records,
            api_names,
            vocabulary,
        })
    }

    /// Drops the vocabulary, marking the label space unbounded.
    pub fn assume_unbounded_labels(mut self) -> Self {
        self.vocabulary = None;
        self
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn api_names(&self) -> &[String] {
        &self.api_names
    }

    pub fn api_index(&self, name: &str) -> Option<usize> {
        self.api_names.iter().position(|n| n == name)
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocabulary.as_ref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn vocabulary_of(records: &[Record]) -> Vocabulary {
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        labels.extend(r.truth.iter().map(String::as_str));
        for p in &r.predictions {
            labels.extend(p.labels());
        }
    }
    Vocabulary::from_labels(labels)
}

/// Ingestion side effects worth surfacing: how many scores were clamped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub clamped_scores: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    truth: Vec<String>,
    predictions: BTreeMap<String, Vec<(String, f64)>>,
}

pub fn load_records(path: &Path) -> Result<Dataset> {
    load_records_stats(path).map(|(d, _)| d)
}

/// Loads a JSONL prediction log. Scores outside [0, 1] are clamped (counted
/// in the stats); duplicate labels within one API's output keep the max score.
pub fn load_records_stats(path: &Path) -> Result<(Dataset, LoadStats)> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut api_names: Option<Vec<String>> = None;
    let mut records = Vec::new();
    let mut stats = LoadStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_owned(),
                line: line_no,
                msg: e.to_string(),
            })?;
        let names: Vec<String> = parsed.predictions.keys().cloned().collect();
        match &api_names {
            None => api_names = Some(names),
            Some(expected) if *expected != names => {
                return Err(Error::InconsistentApiSet {
                    path: path.to_owned(),
                    line: line_no,
                });
            }
            Some(_) => {}
        }
        let mut predictions = Vec::with_capacity(parsed.predictions.len());
        for (_, entries) in parsed.predictions {
            let mut set = ScoredLabelSet::new();
            for (label, score) in entries {
                if !score.is_finite() {
                    return Err(Error::MalformedRecord {
                        path: path.to_owned(),
                        line: line_no,
                        msg: format!("non-finite score for label {label:?}"),
                    });
                }
                if !(0.0..=1.0).contains(&score) {
                    stats.clamped_scores += 1;
                }
                set.insert_max(label, score);
            }
            predictions.push(set);
        }
        records.push(Record {
            id: parsed.id,
            truth: parsed.truth.into_iter().collect(),
            predictions,
        });
    }
    let api_names = api_names.ok_or(Error::EmptyInput("records file"))?;
    Ok((Dataset::new(records, api_names)?, stats))
}

/// Writes a dataset back to the JSONL log format; inverse of [`load_records`].
pub fn save_records(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    for r in dataset.records() {
        let predictions: BTreeMap<String, Vec<(String, f64)>> = dataset
            .api_names()
            .iter()
            .zip(&r.predictions)
            .map(|(name, set)| {
                let entries = set.iter().map(|(l, s)| (l.to_owned(), s)).collect();
                (name.clone(), entries)
            })
            .collect();
        let line = RecordLine {
            id: r.id.clone(),
            truth: r.truth.iter().cloned().collect(),
            predictions,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::InvalidInput(e.to_string()))?;
        writeln!(out).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct CostFile {
    apis: BTreeMap<String, f64>,
    base: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price_unit: Option<String>,
}

/// Loads a cost table and aligns it to the given API order.
pub fn load_cost_table(path: &Path, api_names: &[String]) -> Result<CostTable> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let parsed: CostFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    if let Some(unit) = &parsed.price_unit {
        if unit != "per_query" {
            return Err(Error::InvalidInput(format!(
                "unsupported price_unit {unit:?} (only per_query)"
            )));
        }
    }
    for name in parsed.apis.keys() {
        if !api_names.contains(name) {
            return Err(Error::InvalidInput(format!(
                "cost table names unknown API {name:?}"
            )));
        }
    }
    let mut costs = Vec::with_capacity(api_names.len());
    for name in api_names {
        match parsed.apis.get(name) {
            Some(c) if *c >= 0.0 && c.is_finite() => costs.push(*c),
            Some(c) => {
                return Err(Error::InvalidInput(format!(
                    "negative or non-finite cost {c} for API {name:?}"
                )))
            }
            None => {
                return Err(Error::InvalidInput(format!(
                    "cost table is missing API {name:?}"
                )))
            }
        }
    }
    let base = api_names
        .iter()
        .position(|n| *n == parsed.base)
        .ok_or_else(|| {
            Error::InvalidInput(format!("base API {:?} is not in the dataset", parsed.base))
        })?;
    CostTable::new(costs, base)
}

pub fn save_cost_table(costs: &CostTable, api_names: &[String], path: &Path) -> Result<()> {
    let file = CostFile {
        apis: api_names
            .iter()
            .cloned()
            .zip(costs.costs().iter().copied())
            .collect(),
        base: api_names[costs.base()].clone(),
        price_unit: Some("per_query".into()),
    };
    let body = serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, body + "\n").map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Embedding vectors for labels, all with one shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dimension = match vectors.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::EmptyInput("embedding table")),
        };
        if dimension == 0 {
            return Err(Error::InvalidInput("embedding dimension must be > 0".into()));
        }
        for v in vectors.values() {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                });
            }
        }
        Ok(Self { dimension, vectors })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.vectors.get(label).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(l, v)| (l.as_str(), v.as_slice()))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    label: String,
    vector: Vec<f64>,
}

/// Loads JSONL embeddings; the first line fixes the dimension.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dimension: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingLine =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_owned(),
                line: line_no,
                msg: e.to_string(),
            })?;
        if parsed.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedRecord {
                path: path.to_owned(),
                line: line_no,
                msg: format!("non-finite embedding entry for label {:?}", parsed.label),
            });
        }
        match dimension {
            None => dimension = Some(parsed.vector.len()),
            Some(d) if d != parsed.vector.len() => {
                return Err(Error::MalformedRecord {
                    path: path.to_owned(),
                    line: line_no,
                    msg: format!(
                        "embedding dimension {} differs from first line's {}",
                        parsed.vector.len(),
                        d
                    ),
                });
            }
            Some(_) => {}
        }
        if vectors.insert(parsed.label.clone(), parsed.vector).is_some() {
            return Err(Error::MalformedRecord {
                path: path.to_owned(),
                line: line_no,
                msg: format!("duplicate embedding for label {:?}", parsed.label),
            });
        }
    }
    EmbeddingTable::new(vectors)
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    for (label, vector) in table.iter() {
        let line = EmbeddingLine {
            label: label.to_owned(),
            vector: vector.to_vec(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::InvalidInput(e.to_string()))?;
        writeln!(out).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Deterministic shuffle-and-cut split.
///
/// Train gets floor(N * train_fraction) records; the remainder is halved into
/// validation and test, with an odd leftover going to test. All three parts
/// keep the parent's vocabulary so featurization dimensions agree across them.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 records to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let n_val = (n - n_train) / 2;
    if n_train == 0 || n_val == 0 {
        return Err(Error::InvalidInput(
            "split leaves an empty part; adjust train_fraction".into(),
        ));
    }
    let part = |ids: &[usize]| Dataset {
        records: ids.iter().map(|&i| dataset.records[i].clone()).collect(),
        api_names: dataset.api_names.clone(),
        vocabulary: dataset.vocabulary.clone(),
    };
    Ok((
        part(&order[..n_train]),
        part(&order[n_train..n_train + n_val]),
        part(&order[n_train + n_val..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const TWO_LINES: &str = concat!(
        r#"{"id":"a","truth":["cat"],"predictions":{"p1":[["cat",0.9]],"p2":[["dog",0.4]],"p3":[]}}"#,
        "\n",
        r#"{"id":"b","truth":["dog","cat"],"predictions":{"p1":[],"p2":[["cat",0.7],["cat",0.5]],"p3":[["dog",1.0]]}}"#,
        "\n"
    );

    #[test]
    fn loads_wellformed_log() {
        let f = write_temp(TWO_LINES);
        let d = load_records(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.api_names(), ["p1", "p2", "p3"]);
        // duplicate label keeps the max score
        assert_eq!(d.records()[1].predictions[1].score("cat"), Some(0.7));
        let vocab = d.vocabulary().unwrap();
        assert_eq!(vocab.labels(), ["cat", "dog"]);
        assert_eq!(vocab.index_of("dog"), Some(1));
        assert_eq!(vocab.index_of("bird"), None);
    }

    #[test]
    fn clamps_out_of_range_scores() {
        let f = write_temp(
            r#"{"id":"a","truth":[],"predictions":{"p1":[["x",1.3]],"p2":[["y",-0.5]]}}"#,
        );
        let (d, stats) = load_records_stats(f.path()).unwrap();
        assert_eq!(stats.clamped_scores, 2);
        assert_eq!(d.records()[0].predictions[0].score("x"), Some(1.0));
        assert_eq!(d.records()[0].predictions[1].score("y"), Some(0.0));
    }

    #[test]
    fn rejects_inconsistent_api_sets() {
        let f = write_temp(concat!(
            r#"{"id":"a","truth":[],"predictions":{"p1":[],"p2":[]}}"#,
            "\n",
            r#"{"id":"b","truth":[],"predictions":{"p1":[],"p3":[]}}"#,
        ));
        match load_records(f.path()) {
            Err(Error::InconsistentApiSet { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected inconsistent API set error, got {other:?}"),
        }
    }

    #[test]
    fn names_line_of_malformed_json() {
        let f = write_temp(concat!(
            r#"{"id":"a","truth":[],"predictions":{"p1":[],"p2":[]}}"#,
            "\n",
            "not json",
        ));
        match load_records(f.path()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed record error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_single_api_logs() {
        let f = write_temp(r#"{"id":"a","truth":[],"predictions":{"p1":[]}}"#);
        assert!(load_records(f.path()).is_err());
    }

    #[test]
    fn round_trips_through_save() {
        let f = write_temp(TWO_LINES);
        let d = load_records(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_records(&d, out.path()).unwrap();
        let d2 = load_records(out.path()).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn cost_table_aligns_to_api_order() {
        let f = write_temp(
            r#"{"apis":{"ssd":0.01,"everypixel":6,"microsoft":10,"google":15},"base":"ssd","price_unit":"per_query"}"#,
        );
        let names: Vec<String> = ["ssd", "everypixel", "microsoft", "google"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = load_cost_table(f.path(), &names).unwrap();
        assert_eq!(t.costs(), &[0.01, 6.0, 10.0, 15.0]);
        assert_eq!(t.base(), 0);
        assert_eq!(t.base_cost(), 0.01);
    }

    #[test]
    fn cost_table_accepts_free_base() {
        let f = write_temp(r#"{"apis":{"a":0,"b":2},"base":"a"}"#);
        let names = vec!["a".to_string(), "b".to_string()];
        let t = load_cost_table(f.path(), &names).unwrap();
        assert_eq!(t.base_cost(), 0.0);
    }

    #[test]
    fn cost_table_errors() {
        let names = vec!["a".to_string(), "b".to_string()];
        let missing = write_temp(r#"{"apis":{"a":1},"base":"a"}"#);
        assert!(load_cost_table(missing.path(), &names).is_err());
        let negative = write_temp(r#"{"apis":{"a":1,"b":-2},"base":"a"}"#);
        assert!(load_cost_table(negative.path(), &names).is_err());
        let bad_base = write_temp(r#"{"apis":{"a":1,"b":2},"base":"c"}"#);
        assert!(load_cost_table(bad_base.path(), &names).is_err());
        let unknown = write_temp(r#"{"apis":{"a":1,"b":2,"z":3},"base":"a"}"#);
        assert!(load_cost_table(unknown.path(), &names).is_err());
    }

    #[test]
    fn embeddings_fix_dimension_on_first_line() {
        let f = write_temp(concat!(
            r#"{"label":"cat","vector":[1.0,2.0]}"#,
            "\n",
            r#"{"label":"dog","vector":[0.5,0.0]}"#,
        ));
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.dimension(), 2);
        assert_eq!(t.get("cat"), Some([1.0, 2.0].as_slice()));

        let bad = write_temp(concat!(
            r#"{"label":"cat","vector":[1.0,2.0]}"#,
            "\n",
            r#"{"label":"dog","vector":[0.5]}"#,
        ));
        assert!(load_embeddings(bad.path()).is_err());

        let dup = write_temp(concat!(
            r#"{"label":"cat","vector":[1.0]}"#,
            "\n",
            r#"{"label":"cat","vector":[2.0]}"#,
        ));
        assert!(load_embeddings(dup.path()).is_err());
    }

    fn tiny_dataset(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| Record {
                id: format!("r{i}"),
                truth: BTreeSet::new(),
                predictions: vec![ScoredLabelSet::new(), ScoredLabelSet::new()],
            })
            .collect();
        Dataset::new(records, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let d = tiny_dataset(100);
        let (tr, va, te) = split(&d, 0.5, 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (50, 25, 25));

        let d = tiny_dataset(101);
        let (tr, va, te) = split(&d, 0.5, 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (50, 25, 26));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let d = tiny_dataset(40);
        let (tr1, va1, te1) = split(&d, 0.6, 9).unwrap();
        let (tr2, va2, te2) = split(&d, 0.6, 9).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(te1, te2);

        let mut ids: Vec<&str> = tr1
            .records()
            .iter()
            .chain(va1.records())
            .chain(te1.records())
            .map(|r| r.id.as_str())
            .collect();
        ids.sort_unstable();
        let mut expected: Vec<String> = (0..40).map(|i| format!("r{i}")).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);

        let (tr3, ..) = split(&d, 0.6, 10).unwrap();
        assert_ne!(
            tr1.records().iter().map(|r| &r.id).collect::<Vec<_>>(),
            tr3.records().iter().map(|r| &r.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let d = tiny_dataset(2);
        assert!(split(&d, 0.5, 1).is_err());
        let d = tiny_dataset(10);
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }

    #[test]
    fn split_parts_keep_parent_vocabulary() {
        let f = write_temp(TWO_LINES);
        let mut d = load_records(f.path()).unwrap();
        // pad to splittable size with an empty-label record
        let filler = Record {
            id: "c".into(),
            truth: BTreeSet::new(),
            predictions: vec![
                ScoredLabelSet::new(),
                ScoredLabelSet::new(),
                ScoredLabelSet::new(),
            ],
        };
        d = Dataset::new(
            [d.records(), &[filler]].concat(),
            d.api_names().to_vec(),
        )
        .unwrap();
        let (tr, va, te) = split(&d, 0.34, 3).unwrap();
        for part in [&tr, &va, &te] {
            assert_eq!(part.vocabulary(), d.vocabulary());
        }
    }
}
