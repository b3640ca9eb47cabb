//! Run configuration: fold layout, hyperparameter grid, seeds and weights.

use std::fmt;
use std::path::Path;

use perfpredict::gbtree::GBTConfig;
use perfpredict::metabias::WeightPolicy;
use perfpredict::pipeline::{default_grid, CvSettings, SELECTION_TOL};
use serde::{Deserialize, Serialize};

/// Bad flags or configuration; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub n_trees: usize,
    #[serde(default)]
    pub min_samples_leaf: Option<usize>,
}

impl GridPoint {
    fn to_config(self) -> GBTConfig {
        let c = GBTConfig::new(self.max_depth, self.learning_rate, self.n_trees);
        match self.min_samples_leaf {
            Some(m) => c.with_min_samples_leaf(m),
            None => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub grid: Option<Vec<GridPoint>>,
    pub seeds: Option<Vec<u64>>,
    pub weights: WeightPolicy,
    /// Minimum mean-MAE improvement for greedy selection to add a feature.
    pub tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        let cv = CvSettings::default();
        Self {
            outer_folds: cv.outer_folds,
            inner_folds: cv.inner_folds,
            grid: None,
            seeds: None,
            weights: WeightPolicy::Binomial,
            tol: SELECTION_TOL,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Config = serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(config_error("outer_folds and inner_folds must be at least 2"));
        }
        if matches!(&self.grid, Some(g) if g.is_empty()) {
            return Err(config_error("grid must not be empty"));
        }
        for g in self.grid() {
            g.validate().map_err(|e| config_error(e.to_string()))?;
        }
        Ok(())
    }

    pub fn settings(&self) -> CvSettings {
        CvSettings {
            outer_folds: self.outer_folds,
            inner_folds: self.inner_folds,
        }
    }

    pub fn grid(&self) -> Vec<GBTConfig> {
        match &self.grid {
            Some(g) => g.iter().map(|p| p.to_config()).collect(),
            None => default_grid(),
        }
    }

    /// Config seeds win; otherwise `count` consecutive seeds from `seed`.
    pub fn seeds(&self, seed: u64, count: Option<usize>) -> anyhow::Result<Vec<u64>> {
        if let Some(s) = &self.seeds {
            if s.is_empty() {
                return Err(config_error("seed list must not be empty"));
            }
            return Ok(s.clone());
        }
        match count {
            Some(0) => Err(config_error("--seeds must be at least 1")),
            Some(n) => Ok((0..n as u64).map(|i| seed.wrapping_add(i)).collect()),
            None => Ok(vec![seed]),
        }
    }
}
