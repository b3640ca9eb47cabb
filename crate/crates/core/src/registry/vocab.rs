//! Closed vocabularies for categorical architecture features.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A categorical level with a fixed, ordered vocabulary.
pub trait Level: Copy + Eq + fmt::Debug + 'static {
    /// All levels in vocabulary order (this order fixes one-hot column order).
    const LEVELS: &'static [Self];
    fn as_str(&self) -> &'static str;
}

macro_rules! vocab_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl Level for $name {
            const LEVELS: &'static [Self] = &[$($name::$variant),+];
            fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown level {other:?}; expected one of [{}]",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

vocab_enum!(PositionalEmbeddings {
    Nonparametric => "nonparametric",
    Learned => "learned",
    Rope => "rope",
    Alibi => "alibi",
});

vocab_enum!(LayerNorm {
    Nonparametric => "nonparametric",
    Parametric => "parametric",
    Rmsnorm => "rmsnorm",
});

vocab_enum!(
    /// `local_full` mixes local and full attention layers.
    AttentionVariant {
        Full => "full",
        Local => "local",
        LocalFull => "local_full",
        Mqa => "mqa",
        Gqa => "gqa",
    }
);

vocab_enum!(Biases {
    None => "none",
    AttnOnly => "attn_only",
    LnOnly => "ln_only",
});

vocab_enum!(BlockType {
    Sequential => "sequential",
    Parallel => "parallel",
});

vocab_enum!(Activation {
    Relu => "relu",
    Gelu => "gelu",
    Silu => "silu",
    Swiglu => "swiglu",
});

/// The six categorical architecture features, used where code must handle
/// any of them generically (encoding, contrasts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Categorical {
    PositionalEmbeddings,
    LayerNorm,
    AttentionVariant,
    Biases,
    BlockType,
    Activation,
}

impl Categorical {
    pub const ALL: [Categorical; 6] = [
        Categorical::PositionalEmbeddings,
        Categorical::LayerNorm,
        Categorical::AttentionVariant,
        Categorical::Biases,
        Categorical::BlockType,
        Categorical::Activation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Categorical::PositionalEmbeddings => "positional_embeddings",
            Categorical::LayerNorm => "layer_norm",
            Categorical::AttentionVariant => "attention_variant",
            Categorical::Biases => "biases",
            Categorical::BlockType => "block_type",
            Categorical::Activation => "activation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn levels(self) -> Vec<&'static str> {
        fn names<L: Level>() -> Vec<&'static str> {
            L::LEVELS.iter().map(Level::as_str).collect()
        }
        match self {
            Categorical::PositionalEmbeddings => names::<PositionalEmbeddings>(),
            Categorical::LayerNorm => names::<LayerNorm>(),
            Categorical::AttentionVariant => names::<AttentionVariant>(),
            Categorical::Biases => names::<Biases>(),
            Categorical::BlockType => names::<BlockType>(),
            Categorical::Activation => names::<Activation>(),
        }
    }

    /// Parse `text` against this feature's vocabulary, returning the level's
    /// canonical string on success.
    pub fn parse_level(self, text: &str) -> Result<&'static str, String> {
        fn parse<L: Level + FromStr<Err = String>>(t: &str) -> Result<&'static str, String> {
            t.parse::<L>().map(|l| l.as_str())
        }
        match self {
            Categorical::PositionalEmbeddings => parse::<PositionalEmbeddings>(text),
            Categorical::LayerNorm => parse::<LayerNorm>(text),
            Categorical::AttentionVariant => parse::<AttentionVariant>(text),
            Categorical::Biases => parse::<Biases>(text),
            Categorical::BlockType => parse::<BlockType>(text),
            Categorical::Activation => parse::<Activation>(text),
        }
    }
}

impl fmt::Display for Categorical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_order_and_parsing() {
        assert_eq!(
            Categorical::LayerNorm.levels(),
            vec!["nonparametric", "parametric", "rmsnorm"]
        );
        assert_eq!("local_full".parse::<AttentionVariant>(), Ok(AttentionVariant::LocalFull));
        assert!("RoPE".parse::<PositionalEmbeddings>().is_err());
        assert_eq!(Categorical::Biases.parse_level("attn_only"), Ok("attn_only"));
    }

    #[test]
    fn serde_uses_lowercase_strings() {
        let v = serde_json::to_string(&Biases::LnOnly).unwrap();
        assert_eq!(v, "\"ln_only\"");
        let back: Activation = serde_json::from_str("\"swiglu\"").unwrap();
        assert_eq!(back, Activation::Swiglu);
    }

    #[test]
    fn every_categorical_round_trips_its_name() {
        for c in Categorical::ALL {
            assert_eq!(Categorical::from_name(c.name()), Some(c));
            for level in c.levels() {
                assert_eq!(c.parse_level(level), Ok(level));
            }
        }
    }
}
