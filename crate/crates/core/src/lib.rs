//! Budget-aware selection and combination of multi-label prediction services.
//!
//! The pipeline works over recorded service outputs. A cheap base service is
//! called on every item; a regression forest predicts, from the base output
//! alone, how accurate each candidate add-on service would be on that item; a
//! price-threshold rule decides which add-on (if any) to call so the average
//! spend stays within a user budget; finally the base and add-on label sets
//! are merged by a tuned two-parameter combiner.
//!
//! Modules:
//! - [`types`], [`metrics`]: shared domain types and label-set metrics.
//! - [`dataset`]: JSONL log ingestion, cost tables, embeddings, splits.
//! - [`combiner`]: weighted label-score merge and (w, theta) grid tuning.
//! - [`predictor`]: featurization plus forest / constant accuracy models.
//! - [`selector`]: offline fractional assignment, price-threshold family,
//!   streaming selection under a residual budget, exact reference solvers.
//! - [`baselines`]: call-everything voting ensembles.
//! - [`base_search`]: picks the base service by validation accuracy.
//! - [`pipeline`]: end-to-end training, replay, strategy (de)serialization.
//! - [`synth`]: seeded generators for synthetic logs and instances.

pub mod base_search;
pub mod baselines;
pub mod combiner;
pub mod dataset;
mod error;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod selector;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
