//! Predicting language-model benchmark scores from scale, architecture and
//! pretraining-data features.

pub mod baselines;
pub mod error;
pub mod gbtree;
pub mod linalg;
pub mod metabias;
pub mod metrics;
pub mod pipeline;
pub mod registry;
pub mod rng;
pub mod shap;
pub mod stats;
pub mod synthdata;

pub use error::{Error, Result};
