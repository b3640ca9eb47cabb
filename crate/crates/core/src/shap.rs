//! Exact Shapley attributions for tree ensembles (path-dependent TreeSHAP).
//!
//! The background distribution is the training cover stored in each node.
//! Missing values follow the node's default direction, so a missing feature
//! still receives attribution for the route it took.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gbtree::{Direction, Node, Tree, TreeEnsemble};
use crate::registry::FeatureMatrix;

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

const ROOT: usize = usize::MAX;

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement {
        one_fraction,
        zero_fraction,
        ..
    } = path[index];
    let mut next = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next = tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) as f64 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement {
        one_fraction,
        zero_fraction,
        ..
    } = path[index];
    let mut next = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next * (depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next = path[i].pweight - tmp * zero_fraction * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            total += path[i].pweight / zero_fraction / ((depth - i) as f64 / (depth + 1) as f64);
        }
    }
    total
}

fn routes_left(row: &[f64], feature: usize, threshold: f64, default: Direction) -> bool {
    let x = row[feature];
    if x.is_nan() {
        default == Direction::Left
    } else {
        x < threshold
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    row: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) {
    extend(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value;
            }
        }
        Node::Split {
            feature: split,
            threshold,
            default_direction,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if routes_left(row, *split, *threshold, *default_direction) {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|e| e.feature == *split) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            let parent = *cover as f64;
            let frac = |c: usize| tree.nodes[c].cover() as f64 / parent;
            recurse(
                tree,
                row,
                phi,
                hot,
                path.clone(),
                frac(hot) * incoming_zero,
                incoming_one,
                *split,
            );
            recurse(tree, row, phi, cold, path, frac(cold) * incoming_zero, 0.0, *split);
        }
    }
}

/// Cover-weighted mean leaf value.
pub fn tree_expectation(tree: &Tree) -> f64 {
    let root = tree.nodes[0].cover() as f64;
    tree.nodes
        .iter()
        .map(|n| match n {
            Node::Leaf { value, cover } => value * *cover as f64 / root,
            Node::Split { .. } => 0.0,
        })
        .sum()
}

pub fn base_value(ensemble: &TreeEnsemble) -> f64 {
    ensemble.base_score + ensemble.learning_rate * ensemble.trees.iter().map(tree_expectation).sum::<f64>()
}

fn shap_unchecked(ensemble: &TreeEnsemble, row: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; row.len()];
    for tree in &ensemble.trees {
        let mut per_tree = vec![0.0; row.len()];
        recurse(tree, row, &mut per_tree, 0, Vec::new(), 1.0, 1.0, ROOT);
        for (p, v) in phi.iter_mut().zip(per_tree) {
            *p += ensemble.learning_rate * v;
        }
    }
    phi
}

/// Per-feature attributions for one row, and the base value.
pub fn tree_shap(ensemble: &TreeEnsemble, row: &[f64]) -> Result<(Vec<f64>, f64)> {
    if row.len() != ensemble.columns.len() {
        return Err(invalid(format!(
            "row has {} features, model expects {}",
            row.len(),
            ensemble.columns.len()
        )));
    }
    Ok((shap_unchecked(ensemble, row), base_value(ensemble)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    /// `values[i][j]` is the attribution of column `j` for row `i`.
    pub values: Vec<Vec<f64>>,
    pub base_value: f64,
}

impl ShapMatrix {
    /// One-hot columns summed back into their source feature, in order of
    /// first appearance.
    pub fn grouped(&self, x: &FeatureMatrix) -> ShapMatrix {
        let mut names: Vec<String> = Vec::new();
        let mut target = Vec::with_capacity(x.columns.len());
        for c in &x.columns {
            let g = names.iter().position(|n| *n == c.feature).unwrap_or_else(|| {
                names.push(c.feature.clone());
                names.len() - 1
            });
            target.push(g);
        }
        let values = self
            .values
            .iter()
            .map(|row| {
                let mut out = vec![0.0; names.len()];
                for (j, v) in row.iter().enumerate() {
                    out[target[j]] += v;
                }
                out
            })
            .collect();
        ShapMatrix {
            row_ids: self.row_ids.clone(),
            columns: names,
            values,
            base_value: self.base_value,
        }
    }

    pub fn mean_abs(&self) -> Vec<f64> {
        let n = self.values.len().max(1) as f64;
        (0..self.columns.len())
            .map(|j| self.values.iter().map(|r| r[j].abs()).sum::<f64>() / n)
            .collect()
    }
}

fn check_columns(ensemble: &TreeEnsemble, x: &FeatureMatrix) -> Result<()> {
    if x.column_names() != ensemble.columns {
        return Err(invalid("feature columns differ from the ones the model was fitted on"));
    }
    Ok(())
}

pub fn shap_matrix(ensemble: &TreeEnsemble, x: &FeatureMatrix) -> Result<ShapMatrix> {
    check_columns(ensemble, x)?;
    let values = (0..x.n_rows())
        .into_par_iter()
        .map(|i| shap_unchecked(ensemble, x.row(i)))
        .collect();
    Ok(ShapMatrix {
        row_ids: x.row_ids.clone(),
        columns: ensemble.columns.clone(),
        values,
        base_value: base_value(ensemble),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub mean_abs_phi: f64,
    /// `(feature value, phi)` per row; value is `NaN` when missing.
    pub points: Vec<(f64, f64)>,
}

fn ranked(mut out: Vec<FeatureSummary>) -> Vec<FeatureSummary> {
    out.sort_by(|a, b| {
        b.mean_abs_phi
            .total_cmp(&a.mean_abs_phi)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    out
}

/// Columns ranked by mean |φ| descending, ties by name.
pub fn shap_summary(ensemble: &TreeEnsemble, x: &FeatureMatrix) -> Result<Vec<FeatureSummary>> {
    if x.n_rows() == 0 {
        return Err(invalid("no rows to explain"));
    }
    let m = shap_matrix(ensemble, x)?;
    let means = m.mean_abs();
    Ok(ranked(
        m.columns
            .iter()
            .enumerate()
            .map(|(j, name)| FeatureSummary {
                feature: name.clone(),
                mean_abs_phi: means[j],
                points: (0..x.n_rows()).map(|i| (x.get(i, j), m.values[i][j])).collect(),
            })
            .collect(),
    ))
}

/// As [`shap_summary`] with one-hot groups merged. A merged feature's value
/// is the index of the active level, or `NaN` when missing.
pub fn shap_summary_grouped(ensemble: &TreeEnsemble, x: &FeatureMatrix) -> Result<Vec<FeatureSummary>> {
    if x.n_rows() == 0 {
        return Err(invalid("no rows to explain"));
    }
    let g = shap_matrix(ensemble, x)?.grouped(x);
    let means = g.mean_abs();
    let out = g
        .columns
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let members: Vec<usize> = (0..x.n_cols()).filter(|&j| x.columns[j].feature == *name).collect();
            let value = |i: usize| -> f64 {
                if members.len() == 1 {
                    return x.get(i, members[0]);
                }
                members
                    .iter()
                    .position(|&j| x.get(i, j) == 1.0)
                    .map_or(f64::NAN, |p| p as f64)
            };
            FeatureSummary {
                feature: name.clone(),
                mean_abs_phi: means[k],
                points: (0..x.n_rows()).map(|i| (value(i), g.values[i][k])).collect(),
            }
        })
        .collect();
    Ok(ranked(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dependence {
    pub feature: String,
    pub points: Vec<(f64, f64)>,
    pub row_ids: Vec<String>,
    pub n_missing: usize,
}

/// `(value, φ)` for every row where the column is present.
pub fn shap_dependence(ensemble: &TreeEnsemble, x: &FeatureMatrix, feature: &str) -> Result<Dependence> {
    let j = x
        .column_index(feature)
        .ok_or_else(|| invalid(format!("feature {feature:?} is not a model column")))?;
    let m = shap_matrix(ensemble, x)?;
    let mut out = Dependence {
        feature: feature.to_string(),
        points: Vec::new(),
        row_ids: Vec::new(),
        n_missing: 0,
    };
    for i in 0..x.n_rows() {
        if x.is_missing(i, j) {
            out.n_missing += 1;
        } else {
            out.points.push((x.get(i, j), m.values[i][j]));
            out.row_ids.push(x.row_ids[i].clone());
        }
    }
    Ok(out)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Long format: `model_id,feature,feature_value,phi`.
pub fn shap_csv(m: &ShapMatrix, x: &FeatureMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "feature", "feature_value", "phi"]).expect("in-memory write");
    for (i, row) in m.values.iter().enumerate() {
        for (j, phi) in row.iter().enumerate() {
            w.write_record([
                m.row_ids[i].as_str(),
                m.columns[j].as_str(),
                &fmt_value(x.get(i, j)),
                &phi.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// `rank,feature,mean_abs_phi`.
pub fn ranking_csv(summary: &[FeatureSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "feature", "mean_abs_phi"]).expect("in-memory write");
    for (k, s) in summary.iter().enumerate() {
        w.write_record([(k + 1).to_string(), s.feature.clone(), s.mean_abs_phi.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn dependence_csv(d: &Dependence) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "feature_value", "phi"]).expect("in-memory write");
    for (id, (v, p)) in d.row_ids.iter().zip(&d.points) {
        w.write_record([id.clone(), v.to_string(), p.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbtree::{fit_gbt, GBTConfig};

    #[test]
    fn zero_trees() {
        let x = FeatureMatrix::from_plain_rows(&[vec![1.0], vec![2.0]]);
        let e = fit_gbt(&x, &[1.0, 3.0], &GBTConfig::new(2, 0.1, 0).with_min_samples_leaf(1)).unwrap();
        let (phi, base) = tree_shap(&e, &[5.0]).unwrap();
        assert_eq!(phi, vec![0.0]);
        assert_eq!(base, 2.0);
    }

    #[test]
    fn single_split_by_hand() {
        // stump on x0 at 2.5 with covers 2|2, leaves -1 and +1:
        // E = 0, phi0 = f(x) - E, phi1 = 0
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 2.5,
                    default_direction: Direction::Left,
                    left: 1,
                    right: 2,
                    cover: 4,
                },
                Node::Leaf { value: -1.0, cover: 2 },
                Node::Leaf { value: 1.0, cover: 2 },
            ],
        };
        let e = TreeEnsemble {
            base_score: 0.0,
            learning_rate: 1.0,
            trees: vec![tree],
            columns: vec!["a".into(), "b".into()],
            config: GBTConfig::new(1, 1.0, 1),
        };
        let (phi, base) = tree_shap(&e, &[3.0, 7.0]).unwrap();
        assert_eq!(base, 0.0);
        assert_eq!(phi, vec![1.0, 0.0]);
        let (phi, _) = tree_shap(&e, &[f64::NAN, 7.0]).unwrap();
        assert_eq!(phi, vec![-1.0, 0.0]);
    }

    #[test]
    fn grouped_sums_one_hot_members() {
        use crate::registry::{encode_records, ModelRecord};
        let mut recs = Vec::new();
        for (i, ln) in ["parametric", "rmsnorm", "nonparametric", "rmsnorm", "parametric", "rmsnorm"]
            .iter()
            .enumerate()
        {
            let mut r = ModelRecord::new(format!("m{i}"), 1e8 * (i + 1) as f64, 100.0);
            r.arch.layer_norm = Some(ln.parse().unwrap());
            recs.push(r);
        }
        let names = vec!["total_params".to_string(), "layer_norm".to_string()];
        let x = encode_records(&recs, &names).unwrap();
        let y: Vec<f64> = (0..6).map(|i| (i % 3) as f64 + 0.1 * i as f64).collect();
        let e = fit_gbt(&x, &y, &GBTConfig::new(3, 0.3, 20).with_min_samples_leaf(1)).unwrap();
        let m = shap_matrix(&e, &x).unwrap();
        let g = m.grouped(&x);
        assert_eq!(g.columns, vec!["total_params", "layer_norm"]);
        for (full, merged) in m.values.iter().zip(&g.values) {
            assert!((full[1] + full[2] + full[3] - merged[1]).abs() < 1e-15);
        }
    }
}
