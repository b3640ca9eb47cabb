//! Nested cross-validation, grid search over tree hyperparameters,
//! multi-seed evaluation and greedy forward feature selection.
//!
//! Every unit of work (seed, outer fold, grid point, candidate feature) is
//! independent. Work runs on the rayon pool and results are collected in
//! work-unit order, so outputs do not depend on the number of threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_log_linear, fit_power_law, median, scale_points};
use crate::error::{invalid, Result};
use crate::gbtree::{fit_gbt, GBTConfig};
use crate::metrics::mae;
use crate::registry::{encode_features, Dataset, FeatureMatrix, SCALING_FEATURES};
use crate::rng::{CounterRng, PRNG_ID};
use crate::stats::{mean_ci95, paired_t_test, MeanCi, TTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Median,
    LogLinear,
    PowerLaw,
    Gbt,
}

impl PredictorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "median" => Some(Self::Median),
            "log_linear" | "log-linear" => Some(Self::LogLinear),
            "power_law" | "power-law" => Some(Self::PowerLaw),
            "gbt" => Some(Self::Gbt),
            _ => None,
        }
    }
}

/// Depth {2, 3, 5} × rate {0.01, 0.1, 0.3} × trees {50, 100}.
pub fn default_grid() -> Vec<GBTConfig> {
    let mut out = Vec::with_capacity(18);
    for depth in [2, 3, 5] {
        for rate in [0.01, 0.1, 0.3] {
            for trees in [50, 100] {
                out.push(GBTConfig::new(depth, rate, trees));
            }
        }
    }
    out
}

/// Shuffle the sorted ids with the counter PRNG, then deal round-robin.
pub fn assign_folds(model_ids: &[&str], k: usize, seed: u64) -> BTreeMap<String, usize> {
    let mut ids: Vec<&str> = model_ids.to_vec();
    ids.sort_unstable();
    CounterRng::new(seed, "folds").shuffle(&mut ids);
    ids.into_iter().enumerate().map(|(i, id)| (id.to_string(), i % k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVPlan {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub fold_assignment: BTreeMap<String, usize>,
}

impl CVPlan {
    pub fn new(dataset: &Dataset, outer_folds: usize, inner_folds: usize, seed: u64) -> Result<Self> {
        if outer_folds < 2 || inner_folds < 2 {
            return Err(invalid("cross-validation needs at least 2 folds"));
        }
        Ok(Self {
            outer_folds,
            inner_folds,
            seed,
            fold_assignment: assign_folds(&dataset.model_ids(), outer_folds, seed),
        })
    }

    /// Seed for the inner split of one outer fold.
    pub fn inner_seed(&self, outer_fold: usize) -> u64 {
        CounterRng::substream(self.seed, "inner-folds", outer_fold as u64).next_u64()
    }
}

/// Fold layout shared by every run; the seed varies per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSettings {
    pub outer_folds: usize,
    pub inner_folds: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            outer_folds: 3,
            inner_folds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofPrediction {
    pub model_id: String,
    pub fold: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub task: String,
    pub predictor: PredictorKind,
    pub feature_names: Vec<String>,
    pub prng: String,
    pub plan: CVPlan,
    /// In dataset order.
    pub predictions: Vec<OofPrediction>,
    pub mae: f64,
    /// Winning config per outer fold (GBT only).
    pub fold_configs: Vec<Option<GBTConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GBTConfig,
    /// Inner-CV MAE per grid point, in grid order. Empty for a singleton grid.
    pub scores: Vec<f64>,
}

fn grid_key(c: &GBTConfig) -> (usize, usize, f64) {
    (c.n_trees, c.max_depth, c.learning_rate)
}

/// Inner-CV MAE of one config on a training split.
fn inner_mae(x: &FeatureMatrix, y: &[f64], folds: &[usize], k: usize, config: &GBTConfig) -> Result<f64> {
    let mut pred = vec![0.0; y.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_gbt(&x.select_rows(&train), &ty, config)?;
        for (&i, p) in test.iter().zip(model.predict_matrix(&x.select_rows(&test))?) {
            pred[i] = p;
        }
    }
    mae(&pred, y)
}

pub fn grid_search(
    x: &FeatureMatrix,
    y: &[f64],
    grid: &[GBTConfig],
    inner_folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    match grid {
        [] => return Err(invalid("hyperparameter grid is empty")),
        [only] => {
            return Ok(GridSearchResult {
                best: *only,
                scores: Vec::new(),
            })
        }
        _ => {}
    }
    if y.len() < inner_folds {
        return Err(invalid(format!(
            "training split of {} rows is smaller than {inner_folds} inner folds",
            y.len()
        )));
    }
    let ids: Vec<&str> = x.row_ids.iter().map(String::as_str).collect();
    let assignment = assign_folds(&ids, inner_folds, seed);
    let folds: Vec<usize> = x.row_ids.iter().map(|id| assignment[id]).collect();
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|c| inner_mae(x, y, &folds, inner_folds, c))
        .collect::<Result<_>>()?;
    let best = (0..grid.len())
        .min_by(|&a, &b| {
            let (ka, kb) = (grid_key(&grid[a]), grid_key(&grid[b]));
            scores[a]
                .total_cmp(&scores[b])
                .then(ka.0.cmp(&kb.0))
                .then(ka.1.cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .expect("grid is nonempty");
    Ok(GridSearchResult {
        best: grid[best],
        scores,
    })
}

struct FoldOutput {
    test: Vec<usize>,
    predicted: Vec<f64>,
    config: Option<GBTConfig>,
}

fn run_fold(
    dataset: &Dataset,
    x: &FeatureMatrix,
    y: &[f64],
    folds: &[usize],
    fold: usize,
    kind: PredictorKind,
    plan: &CVPlan,
    grid: &[GBTConfig],
) -> Result<FoldOutput> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let points = scale_points(dataset);
    let (predicted, config) = match kind {
        PredictorKind::Median => {
            let m = median(&ty)?;
            (vec![m; test.len()], None)
        }
        PredictorKind::LogLinear => {
            let tp: Vec<_> = train.iter().map(|&i| points[i]).collect();
            let f = fit_log_linear(&tp)?;
            (test.iter().map(|&i| f.predict(points[i].n, points[i].d)).collect(), None)
        }
        PredictorKind::PowerLaw if ty.iter().all(|&v| v == ty[0]) => {
            // a constant split has no curve to fit; its limit is the constant
            (vec![ty[0]; test.len()], None)
        }
        PredictorKind::PowerLaw => {
            let tp: Vec<_> = train.iter().map(|&i| points[i]).collect();
            let f = fit_power_law(&tp, dataset.task.polarity)?;
            let p = test
                .iter()
                .map(|&i| f.predict_score(points[i].n, points[i].d))
                .collect::<Result<_>>()?;
            (p, None)
        }
        PredictorKind::Gbt => {
            let tx = x.select_rows(&train);
            let chosen = grid_search(&tx, &ty, grid, plan.inner_folds, plan.inner_seed(fold))?.best;
            let config = chosen.with_seed(plan.seed);
            let model = fit_gbt(&tx, &ty, &config)?;
            (model.predict_matrix(&x.select_rows(&test))?, Some(config))
        }
    };
    Ok(FoldOutput {
        test,
        predicted,
        config,
    })
}

pub fn run_cv(
    dataset: &Dataset,
    feature_names: &[String],
    kind: PredictorKind,
    plan: &CVPlan,
    grid: &[GBTConfig],
) -> Result<CVResult> {
    let n = dataset.len();
    if n < 3 * plan.outer_folds {
        return Err(invalid(format!(
            "{n} rows is too few for {} outer folds",
            plan.outer_folds
        )));
    }
    if kind == PredictorKind::Gbt && grid.is_empty() {
        return Err(invalid("hyperparameter grid is empty"));
    }
    let folds: Vec<usize> = dataset
        .model_ids()
        .iter()
        .map(|id| {
            plan.fold_assignment
                .get(*id)
                .copied()
                .ok_or_else(|| invalid(format!("model {id:?} has no fold assignment")))
        })
        .collect::<Result<_>>()?;
    let x = if kind == PredictorKind::Gbt {
        encode_features(dataset, feature_names)?
    } else {
        FeatureMatrix::from_plain_rows(&vec![Vec::new(); n])
    };
    let y = dataset.targets();
    let outputs: Vec<FoldOutput> = (0..plan.outer_folds)
        .into_par_iter()
        .map(|f| run_fold(dataset, &x, &y, &folds, f, kind, plan, grid))
        .collect::<Result<_>>()?;

    let mut predicted = vec![f64::NAN; n];
    for o in &outputs {
        for (&i, &p) in o.test.iter().zip(&o.predicted) {
            predicted[i] = p;
        }
    }
    let predictions = dataset
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| OofPrediction {
            model_id: r.record.model_id.clone(),
            fold: folds[i],
            actual: r.value,
            predicted: predicted[i],
        })
        .collect();
    Ok(CVResult {
        task: dataset.task.key(),
        predictor: kind,
        feature_names: feature_names.to_vec(),
        prng: PRNG_ID.to_string(),
        plan: plan.clone(),
        predictions,
        mae: mae(&predicted, &y)?,
        fold_configs: outputs.into_iter().map(|o| o.config).collect(),
    })
}

fn check_distinct(seeds: &[u64]) -> Result<()> {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("seeds must be distinct"));
    }
    Ok(())
}

/// One full CV run per seed, in seed order.
pub fn multi_seed_cv(
    dataset: &Dataset,
    feature_names: &[String],
    kind: PredictorKind,
    seeds: &[u64],
    grid: &[GBTConfig],
    settings: CvSettings,
) -> Result<Vec<CVResult>> {
    check_distinct(seeds)?;
    seeds
        .par_iter()
        .map(|&s| {
            let plan = CVPlan::new(dataset, settings.outer_folds, settings.inner_folds, s)?;
            run_cv(dataset, feature_names, kind, &plan, grid)
        })
        .collect()
}

pub fn multi_seed_mae(
    dataset: &Dataset,
    feature_names: &[String],
    kind: PredictorKind,
    seeds: &[u64],
    grid: &[GBTConfig],
    settings: CvSettings,
) -> Result<Vec<f64>> {
    Ok(multi_seed_cv(dataset, feature_names, kind, seeds, grid, settings)?
        .into_iter()
        .map(|r| r.mae)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub added_feature: String,
    pub mean_mae_after: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub task: String,
    pub prng: String,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub base_features: Vec<String>,
    pub base_mae: f64,
    pub steps: Vec<SelectionStep>,
    pub final_features: Vec<String>,
}

pub const SELECTION_TOL: f64 = 1e-4;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Greedy forward selection from the scaling pair. Each step adds the
/// candidate with the lowest mean CV MAE over `seeds`, if it improves by at
/// least `tol`; equal MAEs go to the lexicographically first name.
pub fn greedy_select(
    dataset: &Dataset,
    candidates: &[String],
    settings: CvSettings,
    grid: &[GBTConfig],
    seeds: &[u64],
    tol: f64,
) -> Result<SelectionTrace> {
    if seeds.is_empty() {
        return Err(invalid("selection needs at least one seed"));
    }
    if let Some(c) = candidates.iter().find(|c| SCALING_FEATURES.contains(&c.as_str())) {
        return Err(invalid(format!("{c} is always included and cannot be a candidate")));
    }
    let mut remaining: Vec<String> = candidates.to_vec();
    remaining.sort();
    remaining.dedup();
    let base: Vec<String> = SCALING_FEATURES.iter().map(|s| s.to_string()).collect();
    let score = |features: &[String]| -> Result<f64> {
        Ok(mean(&multi_seed_mae(dataset, features, PredictorKind::Gbt, seeds, grid, settings)?))
    };
    let base_mae = score(&base)?;
    let mut current = base.clone();
    let mut current_mae = base_mae;
    let mut steps = Vec::new();
    while !remaining.is_empty() {
        let maes: Vec<f64> = remaining
            .par_iter()
            .map(|c| {
                let mut f = current.clone();
                f.push(c.clone());
                score(&f)
            })
            .collect::<Result<_>>()?;
        let best = (0..remaining.len())
            .min_by(|&a, &b| maes[a].total_cmp(&maes[b]).then(a.cmp(&b)))
            .expect("nonempty");
        let improvement = current_mae - maes[best];
        if improvement < tol {
            break;
        }
        let added = remaining.remove(best);
        current.push(added.clone());
        current_mae = maes[best];
        steps.push(SelectionStep {
            added_feature: added,
            mean_mae_after: current_mae,
            improvement,
        });
    }
    Ok(SelectionTrace {
        task: dataset.task.key(),
        prng: PRNG_ID.to_string(),
        seeds: seeds.to_vec(),
        tol,
        base_features: base,
        base_mae,
        steps,
        final_features: current,
    })
}

/// Per-seed MAEs of two feature sets with the paired test between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: String,
    pub features_a: Vec<String>,
    pub features_b: Vec<String>,
    pub seeds: Vec<u64>,
    pub mae_a: Vec<f64>,
    pub mae_b: Vec<f64>,
    pub ci_a: Option<MeanCi>,
    pub ci_b: Option<MeanCi>,
    pub test: Option<TTest>,
}

pub fn compare_feature_sets(
    dataset: &Dataset,
    features_a: &[String],
    features_b: &[String],
    seeds: &[u64],
    grid: &[GBTConfig],
    settings: CvSettings,
) -> Result<Comparison> {
    let mae_a = multi_seed_mae(dataset, features_a, PredictorKind::Gbt, seeds, grid, settings)?;
    let mae_b = multi_seed_mae(dataset, features_b, PredictorKind::Gbt, seeds, grid, settings)?;
    let enough = seeds.len() >= 2;
    Ok(Comparison {
        task: dataset.task.key(),
        features_a: features_a.to_vec(),
        features_b: features_b.to_vec(),
        seeds: seeds.to_vec(),
        ci_a: enough.then(|| mean_ci95(&mae_a)).transpose()?,
        ci_b: enough.then(|| mean_ci95(&mae_b)).transpose()?,
        test: enough.then(|| paired_t_test(&mae_a, &mae_b)).transpose()?,
        mae_a,
        mae_b,
    })
}
