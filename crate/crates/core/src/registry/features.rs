//! Feature catalog: every name a feature matrix may request, with its source
//! group and how it is read off a [`ModelRecord`].

use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{gen_feature_kind, ModelRecord};
use super::vocab::Categorical;

/// Where a feature comes from: architecture, data documentation, or free
/// generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceGroup {
    A,
    D,
    F,
}

impl fmt::Display for SourceGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceGroup::A => "A",
            SourceGroup::D => "D",
            SourceGroup::F => "F",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericField {
    TotalParams,
    Dimension,
    NumHeads,
    MlpRatio,
    SequenceLength,
    BatchInstances,
    TotalTokensBillions,
    PctWeb,
    PctCode,
    PctBooks,
    PctReference,
    PctAcademic,
    PctEnglish,
}

impl NumericField {
    pub const ARCH: [NumericField; 6] = [
        NumericField::TotalParams,
        NumericField::Dimension,
        NumericField::NumHeads,
        NumericField::MlpRatio,
        NumericField::SequenceLength,
        NumericField::BatchInstances,
    ];

    pub const DATA: [NumericField; 7] = [
        NumericField::TotalTokensBillions,
        NumericField::PctWeb,
        NumericField::PctCode,
        NumericField::PctBooks,
        NumericField::PctReference,
        NumericField::PctAcademic,
        NumericField::PctEnglish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NumericField::TotalParams => "total_params",
            NumericField::Dimension => "dimension",
            NumericField::NumHeads => "num_heads",
            NumericField::MlpRatio => "mlp_ratio",
            NumericField::SequenceLength => "sequence_length",
            NumericField::BatchInstances => "batch_instances",
            NumericField::TotalTokensBillions => "total_tokens_billions",
            NumericField::PctWeb => "pct_web",
            NumericField::PctCode => "pct_code",
            NumericField::PctBooks => "pct_books",
            NumericField::PctReference => "pct_reference",
            NumericField::PctAcademic => "pct_academic",
            NumericField::PctEnglish => "pct_english",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ARCH
            .into_iter()
            .chain(Self::DATA)
            .find(|f| f.name() == name)
    }

    pub fn group(self) -> SourceGroup {
        if Self::ARCH.contains(&self) {
            SourceGroup::A
        } else {
            SourceGroup::D
        }
    }

    /// Integer-valued counts (must be whole and positive).
    pub fn is_count(self) -> bool {
        matches!(
            self,
            NumericField::Dimension
                | NumericField::NumHeads
                | NumericField::SequenceLength
                | NumericField::BatchInstances
        )
    }

    pub fn is_percent(self) -> bool {
        matches!(
            self,
            NumericField::PctWeb
                | NumericField::PctCode
                | NumericField::PctBooks
                | NumericField::PctReference
                | NumericField::PctAcademic
                | NumericField::PctEnglish
        )
    }

    /// The two scale features are encoded on a log10 axis.
    pub fn is_log_scaled(self) -> bool {
        matches!(self, NumericField::TotalParams | NumericField::TotalTokensBillions)
    }

    pub fn value(self, r: &ModelRecord) -> Option<f64> {
        let a = &r.arch;
        let d = &r.data;
        match self {
            NumericField::TotalParams => Some(a.total_params),
            NumericField::Dimension => a.dimension.map(|v| v as f64),
            NumericField::NumHeads => a.num_heads.map(|v| v as f64),
            NumericField::MlpRatio => a.mlp_ratio,
            NumericField::SequenceLength => a.sequence_length.map(|v| v as f64),
            NumericField::BatchInstances => a.batch_instances.map(|v| v as f64),
            NumericField::TotalTokensBillions => Some(d.total_tokens_billions),
            NumericField::PctWeb => d.pct_web,
            NumericField::PctCode => d.pct_code,
            NumericField::PctBooks => d.pct_books,
            NumericField::PctReference => d.pct_reference,
            NumericField::PctAcademic => d.pct_academic,
            NumericField::PctEnglish => d.pct_english,
        }
    }
}

/// A resolved feature name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    Numeric(NumericField),
    Categorical(Categorical),
    Gen(String),
}

impl FeatureKey {
    pub fn parse(name: &str) -> Option<Self> {
        if let Some(f) = NumericField::from_name(name) {
            Some(FeatureKey::Numeric(f))
        } else if let Some(c) = Categorical::from_name(name) {
            Some(FeatureKey::Categorical(c))
        } else {
            gen_feature_kind(name).map(|_| FeatureKey::Gen(name.to_string()))
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FeatureKey::Numeric(f) => f.name(),
            FeatureKey::Categorical(c) => c.name(),
            FeatureKey::Gen(n) => n,
        }
    }

    pub fn group(&self) -> SourceGroup {
        match self {
            FeatureKey::Numeric(f) => f.group(),
            FeatureKey::Categorical(_) => SourceGroup::A,
            FeatureKey::Gen(_) => SourceGroup::F,
        }
    }
}

/// The scale-only feature pair every predictor starts from.
pub const SCALING_FEATURES: [&str; 2] = ["total_params", "total_tokens_billions"];

/// Every documented feature name other than the scaling pair, sorted.
pub fn candidate_feature_names() -> Vec<String> {
    let mut names: Vec<String> = NumericField::ARCH
        .into_iter()
        .chain(NumericField::DATA)
        .filter(|f| !f.is_log_scaled())
        .map(|f| f.name().to_string())
        .chain(Categorical::ALL.into_iter().map(|c| c.name().to_string()))
        .chain(super::model::gen_feature_names().map(str::to_string))
        .collect();
    names.sort();
    names
}
