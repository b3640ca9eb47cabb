//! Model registry: data model, loading, validation and feature encoding.

mod encode;
mod features;
mod load;
mod model;
mod scores;
pub mod vocab;

pub use encode::{encode_features, encode_records, plan_columns, Column, FeatureMatrix, Transform};
pub use features::{candidate_feature_names, FeatureKey, NumericField, SourceGroup, SCALING_FEATURES};
pub use load::{CsvMapping, Registry, RegistryFormat, Violation, DOMAIN_SUM_TOLERANCE};
pub use model::{
    gen_feature_kind, gen_feature_names, ArchFeatures, DataFeatures, GenFeatures, GenKind, ModelRecord,
};
pub use scores::{
    join_scores, load_scores, parse_scores, score_violations, write_scores, Dataset, DatasetRow, MetricKind,
    Polarity, ScoreRecord, TaskSpec, SCORES_HEADER,
};
pub use vocab::Categorical;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no records")]
    NoRecords,
    #[error("{} validation violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("invalid column mapping: {0}")]
    Mapping(String),
    #[error("unknown feature name {0:?}")]
    UnknownFeature(String),
    #[error("score for unknown model {model_id:?} on {task}")]
    OrphanScore { model_id: String, task: String },
    #[error("score {value} for {model_id:?} on {task} is outside the metric range")]
    ScoreRange { model_id: String, task: String, value: f64 },
    #[error("{0}")]
    Task(String),
}
