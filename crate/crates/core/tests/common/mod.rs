//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use perfpredict::gbtree::{Direction, GBTConfig, Node, Tree, TreeEnsemble};
use perfpredict::rng::CounterRng;

/// Expected tree output when features outside `known` are marginalized by
/// cover. Written from the definition, without path bookkeeping.
fn conditional_value(tree: &Tree, node: usize, row: &[f64], known: u32) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split { feature, threshold, default_direction, left, right, cover } => {
            if known & (1 << feature) != 0 {
                let x = row[*feature];
                let go_left = if x.is_nan() { *default_direction == Direction::Left } else { x < *threshold };
                conditional_value(tree, if go_left { *left } else { *right }, row, known)
            } else {
                let c = *cover as f64;
                let wl = tree.nodes[*left].cover() as f64 / c;
                let wr = tree.nodes[*right].cover() as f64 / c;
                wl * conditional_value(tree, *left, row, known) + wr * conditional_value(tree, *right, row, known)
            }
        }
    }
}

fn coalition_value(e: &TreeEnsemble, row: &[f64], known: u32) -> f64 {
    e.base_score + e.learning_rate * e.trees.iter().map(|t| conditional_value(t, 0, row, known)).sum::<f64>()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating every coalition; returns (phi, v(empty)).
pub fn brute_force_shap(e: &TreeEnsemble, row: &[f64]) -> (Vec<f64>, f64) {
    let m = row.len();
    assert!(m <= 16);
    let values: Vec<f64> = (0..1u32 << m).map(|s| coalition_value(e, row, s)).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..1u32 << m {
            if s & (1 << i) != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = factorial(k) * factorial(m - k - 1) / factorial(m);
            *p += w * (values[(s | (1 << i)) as usize] - values[s as usize]);
        }
    }
    (phi, values[0])
}

fn random_tree(rng: &mut CounterRng, n_features: usize, max_depth: usize, cover: usize) -> Tree {
    fn grow(rng: &mut CounterRng, nodes: &mut Vec<Node>, p: usize, depth: usize, cover: usize) -> usize {
        let id = nodes.len();
        if depth == 0 || cover < 2 || rng.next_f64() < 0.2 {
            nodes.push(Node::Leaf { value: rng.next_f64() * 4.0 - 2.0, cover });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover });
        let cl = 1 + rng.below(cover as u64 - 1) as usize;
        let feature = rng.below(p as u64) as usize;
        let threshold = (rng.next_f64() * 10.0).round() / 2.0;
        let default_direction = if rng.next_f64() < 0.5 { Direction::Left } else { Direction::Right };
        let left = grow(rng, nodes, p, depth - 1, cl);
        let right = grow(rng, nodes, p, depth - 1, cover - cl);
        nodes[id] = Node::Split { feature, threshold, default_direction, left, right, cover };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, n_features, max_depth, cover);
    Tree { nodes }
}

/// Random ensemble over `n_features` columns with consistent covers.
pub fn random_ensemble(rng: &mut CounterRng, n_features: usize) -> TreeEnsemble {
    let n_trees = 1 + rng.below(5) as usize;
    let depth = 1 + rng.below(5) as usize;
    let lr = [0.01, 0.1, 0.3, 1.0][rng.below(4) as usize];
    TreeEnsemble {
        base_score: rng.next_f64(),
        learning_rate: lr,
        trees: (0..n_trees)
            .map(|_| {
                let cover = 20 + rng.below(60) as usize;
                random_tree(rng, n_features, depth, cover)
            })
            .collect(),
        columns: (0..n_features).map(|j| format!("x{j}")).collect(),
        config: GBTConfig::new(depth, lr, n_trees),
    }
}

/// Row of values on the threshold lattice, some missing.
pub fn random_row(rng: &mut CounterRng, n_features: usize) -> Vec<f64> {
    (0..n_features)
        .map(|_| if rng.next_f64() < 0.15 { f64::NAN } else { (rng.next_f64() * 10.0).round() / 2.0 + 0.25 })
        .collect()
}
