//! Gradient-boosted regression trees with squared-error loss.
//!
//! Splits are exact: every midpoint between adjacent distinct present values
//! is scored. Rows with a missing value at a split are sent to the side that
//! gave the higher gain during training; the chosen side is stored per node.
//! Training rows are put into a canonical order first, so the fitted ensemble
//! does not depend on the order rows were supplied in.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::registry::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBTConfig {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Recorded with the model. Fitting has no random component, so the
    /// seed does not change the result.
    pub seed: u64,
}

impl GBTConfig {
    pub fn new(max_depth: usize, learning_rate: f64, n_trees: usize) -> Self {
        Self {
            max_depth,
            learning_rate,
            n_trees,
            min_samples_leaf: 2,
            seed: 0,
        }
    }

    pub fn with_min_samples_leaf(mut self, m: usize) -> Self {
        self.min_samples_leaf = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(invalid("max_depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.min_samples_leaf == 0 {
            return Err(invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Present values `< threshold` go left.
        threshold: f64,
        default_direction: Direction,
        left: usize,
        right: usize,
        cover: usize,
    },
    Leaf {
        value: f64,
        cover: usize,
    },
}

impl Node {
    pub fn cover(&self) -> usize {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    default_direction,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = if x.is_nan() {
                        *default_direction == Direction::Left
                    } else {
                        x < *threshold
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub columns: Vec<String>,
    pub config: GBTConfig,
}

impl TreeEnsemble {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.columns.len() {
            return Err(invalid(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.columns.len()
            )));
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.learning_rate * s
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.column_names() != self.columns {
            return Err(invalid("feature columns differ from the ones the model was fitted on"));
        }
        Ok((0..x.n_rows()).map(|i| self.predict_unchecked(x.row(i))).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("bad ensemble JSON: {e}")))
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    gain: f64,
}

struct Builder<'a> {
    /// Canonical-order rows.
    x: Vec<&'a [f64]>,
    /// Per feature: present rows sorted by value, then canonical index.
    sorted: Vec<Vec<usize>>,
    config: GBTConfig,
}

impl Builder<'_> {
    fn best_split(&self, rows: &[usize], in_node: &[bool], resid: &[f64]) -> Option<Split> {
        let n = rows.len();
        let msl = self.config.min_samples_leaf;
        let total: f64 = rows.iter().map(|&i| resid[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<Split> = None;
        for (j, order) in self.sorted.iter().enumerate() {
            let present: Vec<usize> = order.iter().copied().filter(|&i| in_node[i]).collect();
            let n_present = present.len();
            if n_present < 2 {
                continue;
            }
            let present_sum: f64 = present.iter().map(|&i| resid[i]).sum();
            let n_miss = n - n_present;
            let miss_sum = total - present_sum;
            let mut left_sum = 0.0;
            for k in 0..n_present - 1 {
                left_sum += resid[present[k]];
                let (v, w) = (self.x[present[k]][j], self.x[present[k + 1]][j]);
                if v == w {
                    continue;
                }
                let mut threshold = v + (w - v) / 2.0;
                if threshold <= v {
                    threshold = w;
                }
                let n_left = k + 1;
                let directions: &[bool] = if n_miss > 0 { &[true, false] } else { &[true] };
                for &missing_left in directions {
                    let (nl, sl) = if missing_left {
                        (n_left + n_miss, left_sum + miss_sum)
                    } else {
                        (n_left, left_sum)
                    };
                    let (nr, sr) = (n - nl, total - sl);
                    if nl < msl || nr < msl {
                        continue;
                    }
                    let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                    if gain > 0.0 && best.as_ref().map_or(true, |b| gain > b.gain) {
                        let missing_left = if n_miss > 0 { missing_left } else { nl >= nr };
                        best = Some(Split {
                            feature: j,
                            threshold,
                            missing_left,
                            gain,
                        });
                    }
                }
            }
        }
        best
    }

    fn build(
        &self,
        nodes: &mut Vec<Node>,
        rows: Vec<usize>,
        depth: usize,
        in_node: &mut [bool],
        resid: &[f64],
        leaf_of: &mut [usize],
    ) -> usize {
        let id = nodes.len();
        let n = rows.len();
        let can_split = depth < self.config.max_depth && n >= 2 * self.config.min_samples_leaf;
        let split = if can_split {
            rows.iter().for_each(|&i| in_node[i] = true);
            let s = self.best_split(&rows, in_node, resid);
            rows.iter().for_each(|&i| in_node[i] = false);
            s
        } else {
            None
        };
        let Some(s) = split else {
            let value = rows.iter().map(|&i| resid[i]).sum::<f64>() / n as f64;
            nodes.push(Node::Leaf { value, cover: n });
            rows.iter().for_each(|&i| leaf_of[i] = id);
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| {
            let x = self.x[i][s.feature];
            if x.is_nan() {
                s.missing_left
            } else {
                x < s.threshold
            }
        });
        nodes.push(Node::Leaf { value: 0.0, cover: n });
        let left = self.build(nodes, l, depth + 1, in_node, resid, leaf_of);
        let right = self.build(nodes, r, depth + 1, in_node, resid, leaf_of);
        nodes[id] = Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            default_direction: if s.missing_left { Direction::Left } else { Direction::Right },
            left,
            right,
            cover: n,
        };
        id
    }
}

fn canonical_cmp(a: (&[f64], f64), b: (&[f64], f64)) -> Ordering {
    a.0.iter()
        .zip(b.0)
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.1.total_cmp(&b.1))
}

pub fn fit_gbt(x: &FeatureMatrix, y: &[f64], config: &GBTConfig) -> Result<TreeEnsemble> {
    fit_gbt_traced(x, y, config).map(|(e, _)| e)
}

/// Also returns training MSE after each round (index 0 is the base score).
pub fn fit_gbt_traced(x: &FeatureMatrix, y: &[f64], config: &GBTConfig) -> Result<(TreeEnsemble, Vec<f64>)> {
    config.validate()?;
    let n = x.n_rows();
    let p = x.n_cols();
    if n == 0 || p == 0 {
        return Err(invalid("empty feature matrix"));
    }
    if y.len() != n {
        return Err(invalid(format!("{} targets for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    if n < 2 * config.min_samples_leaf {
        return Err(invalid(format!(
            "need at least {} rows for min_samples_leaf {}",
            2 * config.min_samples_leaf,
            config.min_samples_leaf
        )));
    }
    if (0..p).all(|j| (0..n).all(|i| x.is_missing(i, j))) {
        return Err(Error::Degenerate("every feature is missing for every row".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| canonical_cmp((x.row(a), y[a]), (x.row(b), y[b])));
    let rows: Vec<&[f64]> = order.iter().map(|&i| x.row(i)).collect();
    let targets: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let sorted = (0..p)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).filter(|&i| !rows[i][j].is_nan()).collect();
            idx.sort_by(|&a, &b| rows[a][j].total_cmp(&rows[b][j]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let builder = Builder {
        x: rows,
        sorted,
        config: *config,
    };

    let base_score = if targets.iter().all(|&v| v == targets[0]) {
        targets[0]
    } else {
        targets.iter().sum::<f64>() / n as f64
    };
    let mut pred = vec![base_score; n];
    let mse = |pred: &[f64]| pred.iter().zip(&targets).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / n as f64;
    let mut trace = vec![mse(&pred)];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut in_node = vec![false; n];
    let mut leaf_of = vec![0; n];
    for _ in 0..config.n_trees {
        let resid: Vec<f64> = targets.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let mut nodes = Vec::new();
        builder.build(&mut nodes, (0..n).collect(), 0, &mut in_node, &resid, &mut leaf_of);
        for i in 0..n {
            if let Node::Leaf { value, .. } = nodes[leaf_of[i]] {
                pred[i] += config.learning_rate * value;
            }
        }
        trace.push(mse(&pred));
        trees.push(Tree { nodes });
    }
    Ok((
        TreeEnsemble {
            base_score,
            learning_rate: config.learning_rate,
            trees,
            columns: x.column_names(),
            config: *config,
        },
        trace,
    ))
}
