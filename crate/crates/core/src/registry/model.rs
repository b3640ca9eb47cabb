//! Per-model records: architecture, data composition and generation-derived
//! features.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::vocab::{
    Activation, AttentionVariant, Biases, BlockType, Categorical, LayerNorm, Level,
    PositionalEmbeddings,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchFeatures {
    /// Total parameter count, embeddings included.
    pub total_params: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_heads: Option<u64>,
    /// FFN dimension / embedding dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_instances: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positional_embeddings: Option<PositionalEmbeddings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_norm: Option<LayerNorm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_variant: Option<AttentionVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biases: Option<Biases>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_type: Option<BlockType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

impl ArchFeatures {
    pub fn with_params(total_params: f64) -> Self {
        Self {
            total_params,
            dimension: None,
            num_heads: None,
            mlp_ratio: None,
            sequence_length: None,
            batch_instances: None,
            positional_embeddings: None,
            layer_norm: None,
            attention_variant: None,
            biases: None,
            block_type: None,
            activation: None,
        }
    }

    /// Canonical string of the level held for `feature`, if documented.
    pub fn level(&self, feature: Categorical) -> Option<&'static str> {
        match feature {
            Categorical::PositionalEmbeddings => self.positional_embeddings.map(|l| l.as_str()),
            Categorical::LayerNorm => self.layer_norm.map(|l| l.as_str()),
            Categorical::AttentionVariant => self.attention_variant.map(|l| l.as_str()),
            Categorical::Biases => self.biases.map(|l| l.as_str()),
            Categorical::BlockType => self.block_type.map(|l| l.as_str()),
            Categorical::Activation => self.activation.map(|l| l.as_str()),
        }
    }

    /// Set `feature` from its canonical level string; `None` clears it.
    pub fn set_level(&mut self, feature: Categorical, level: Option<&str>) -> Result<(), String> {
        fn parse<T: std::str::FromStr<Err = String>>(level: Option<&str>) -> Result<Option<T>, String> {
            level.map(str::parse).transpose()
        }
        match feature {
            Categorical::PositionalEmbeddings => self.positional_embeddings = parse(level)?,
            Categorical::LayerNorm => self.layer_norm = parse(level)?,
            Categorical::AttentionVariant => self.attention_variant = parse(level)?,
            Categorical::Biases => self.biases = parse(level)?,
            Categorical::BlockType => self.block_type = parse(level)?,
            Categorical::Activation => self.activation = parse(level)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFeatures {
    pub total_tokens_billions: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_web: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_code: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_books: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_academic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_english: Option<f64>,
}

impl DataFeatures {
    pub fn with_tokens(total_tokens_billions: f64) -> Self {
        Self {
            total_tokens_billions,
            pct_web: None,
            pct_code: None,
            pct_books: None,
            pct_reference: None,
            pct_academic: None,
            pct_english: None,
        }
    }

    /// The five top-level domain shares (English share excluded).
    pub fn domain_shares(&self) -> [Option<f64>; 5] {
        [
            self.pct_web,
            self.pct_code,
            self.pct_books,
            self.pct_reference,
            self.pct_academic,
        ]
    }
}

/// Value constraint attached to each documented generation feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    /// Percentage in [0, 100].
    Percent,
    /// Occurrences per 100k words, >= 0.
    Per100k,
    /// Any non-negative statistic (lengths, depths, standard deviations).
    NonNegative,
    /// Unconstrained finite value.
    Real,
}

const MEAN_STD_BASES: &[&str] = &[
    "char_len",
    "num_tokens",
    "num_sentences",
    "num_words",
    "words_per_sentence",
    "const_parse_const_tree_depth_max",
    "const_parse_const_tree_depth_mean",
    "const_parse_word_depth_mean",
    "const_parse_word_depth_std",
    "dep_parse_dep_head_dist_90th",
    "dep_parse_dep_head_dist_max",
    "dep_parse_dep_head_dist_median",
    "dep_parse_dep_root_dist_max",
    "dep_parse_dep_root_dist_mean",
    "dep_parse_dep_root_dist_median",
    "ttr",
    "unique_tokens",
    "content_function_ratio",
];

const DOMAINS: &[&str] = &["academic", "books", "code", "reference", "specialized", "web"];

fn gen_catalog() -> &'static BTreeMap<String, GenKind> {
    static CATALOG: OnceLock<BTreeMap<String, GenKind>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let mut m = BTreeMap::new();
        for base in MEAN_STD_BASES {
            m.insert(format!("{base}_mean"), GenKind::NonNegative);
            m.insert(format!("{base}_std"), GenKind::NonNegative);
        }
        for d in DOMAINS {
            m.insert(format!("domain_{d}_pct_mean"), GenKind::Percent);
        }
        m.insert("pct_english_mean".into(), GenKind::Percent);
        m.insert("edu_classifier_mean".into(), GenKind::Real);
        m.insert("edu_classifier_std".into(), GenKind::NonNegative);
        m.insert("entropy_mean".into(), GenKind::NonNegative);
        for r in [
            "question_words_ratio",
            "imperative_words_ratio",
            "conjunctions_ratio",
            "instruction_words_ratio",
        ] {
            m.insert(r.into(), GenKind::Per100k);
        }
        m.insert("numbers_ratio".into(), GenKind::NonNegative);
        m
    })
}

/// Constraint for a documented generation feature; `None` if undocumented.
pub fn gen_feature_kind(name: &str) -> Option<GenKind> {
    gen_catalog().get(name).copied()
}

/// All documented generation feature names, sorted.
pub fn gen_feature_names() -> impl Iterator<Item = &'static str> {
    gen_catalog().keys().map(String::as_str)
}

/// Generation-derived features keyed by documented name.
pub type GenFeatures = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    #[serde(default)]
    pub organization: String,
    pub arch: ArchFeatures,
    pub data: DataFeatures,
    #[serde(default)]
    pub gen: GenFeatures,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

impl ModelRecord {
    pub fn new(model_id: impl Into<String>, total_params: f64, total_tokens_billions: f64) -> Self {
        Self {
            model_id: model_id.into(),
            organization: String::new(),
            arch: ArchFeatures::with_params(total_params),
            data: DataFeatures::with_tokens(total_tokens_billions),
            gen: GenFeatures::new(),
            provenance: String::new(),
        }
    }

    /// Total training tokens (not billions).
    pub fn total_tokens(&self) -> f64 {
        self.data.total_tokens_billions * 1e9
    }
}
