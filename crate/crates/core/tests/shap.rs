mod common;

use common::{brute_force_shap, random_ensemble, random_row};
use perfpredict::gbtree::{fit_gbt, GBTConfig, Node};
use perfpredict::registry::FeatureMatrix;
use perfpredict::rng::CounterRng;
use perfpredict::shap::*;
use perfpredict::stats::spearman;

#[test]
fn matches_brute_force_on_random_ensembles() {
    let mut rng = CounterRng::new(5, "shap-oracle");
    for _ in 0..60 {
        let p = 1 + rng.below(8) as usize;
        let e = random_ensemble(&mut rng, p);
        for _ in 0..3 {
            let row = random_row(&mut rng, p);
            let (phi, base) = tree_shap(&e, &row).unwrap();
            let (want, empty) = brute_force_shap(&e, &row);
            assert!((base - empty).abs() < 1e-10);
            for (a, b) in phi.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{phi:?} vs {want:?}");
            }
            let total = base + phi.iter().sum::<f64>();
            assert!((total - e.predict(&row).unwrap()).abs() < 1e-8);
        }
    }
}

#[test]
fn depth_two_two_features_by_coalitions() {
    let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let x = FeatureMatrix::from_plain_rows(&[rows.clone(), rows.clone()].concat());
    let y = [0.0, 1.0, 2.0, 5.0, 0.0, 1.0, 2.0, 5.0];
    let e = fit_gbt(&x, &y, &GBTConfig::new(2, 1.0, 1)).unwrap();
    for r in &rows {
        let (phi, _) = tree_shap(&e, r).unwrap();
        let (want, _) = brute_force_shap(&e, r);
        for (a, b) in phi.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn unused_feature_gets_zero() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| (i as f64).sqrt()).collect();
    let x = FeatureMatrix::from_plain_rows(&rows);
    let e = fit_gbt(&x, &y, &GBTConfig::new(3, 0.3, 30)).unwrap();
    let used: Vec<usize> = e
        .trees
        .iter()
        .flat_map(|t| t.nodes.iter())
        .filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            _ => None,
        })
        .collect();
    let m = shap_matrix(&e, &x).unwrap();
    for j in 0..2 {
        if !used.contains(&j) {
            assert!(m.values.iter().all(|r| r[j] == 0.0));
        }
    }
    // a constant column can never be split on
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 3.0]).collect();
    let x = FeatureMatrix::from_plain_rows(&rows);
    let e = fit_gbt(&x, &y, &GBTConfig::new(3, 0.3, 30)).unwrap();
    let d = shap_dependence(&e, &x, "x1").unwrap();
    assert!(d.points.iter().all(|&(_, phi)| phi == 0.0));
}

#[test]
fn duplicated_columns_share_attribution() {
    use perfpredict::gbtree::{Direction, Tree, TreeEnsemble};
    // two stumps with identical structure, one on each copy
    let stump = |f| Tree {
        nodes: vec![
            Node::Split { feature: f, threshold: 0.5, default_direction: Direction::Left, left: 1, right: 2, cover: 10 },
            Node::Leaf { value: -1.0, cover: 4 },
            Node::Leaf { value: 2.0, cover: 6 },
        ],
    };
    let e = TreeEnsemble {
        base_score: 0.0,
        learning_rate: 0.5,
        trees: vec![stump(0), stump(1)],
        columns: vec!["a".into(), "b".into()],
        config: GBTConfig::new(1, 0.5, 2),
    };
    for v in [0.0, 1.0] {
        let (phi, _) = tree_shap(&e, &[v, v]).unwrap();
        assert_eq!(phi[0], phi[1]);
    }
}

#[test]
fn planted_signal_ranking_and_dependence() {
    let mut rng = CounterRng::new(3, "planted");
    let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.next_f64(), rng.next_f64()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 0.1 * r[1]).collect();
    let x = FeatureMatrix::from_plain_rows(&rows);
    let e = fit_gbt(&x, &y, &GBTConfig::new(3, 0.1, 100)).unwrap();
    let s = shap_summary(&e, &x).unwrap();
    assert_eq!(s[0].feature, "x0");
    assert_eq!(s[1].feature, "x1");
    let d = shap_dependence(&e, &x, "x0").unwrap();
    let (v, p): (Vec<f64>, Vec<f64>) = d.points.iter().copied().unzip();
    assert!(spearman(&v, &p).unwrap().r > 0.9);
    assert!(shap_dependence(&e, &x, "nope").is_err());
}

#[test]
fn dependence_counts_missing_rows() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![if i < 3 { f64::NAN } else { i as f64 }]).collect();
    let x = FeatureMatrix::from_plain_rows(&rows);
    let y: Vec<f64> = (0..10).map(f64::from).collect();
    let e = fit_gbt(&x, &y, &GBTConfig::new(2, 0.3, 5)).unwrap();
    let d = shap_dependence(&e, &x, "x0").unwrap();
    assert_eq!(d.n_missing, 3);
    assert_eq!(d.points.len(), 7);
    let csv = shap_csv(&shap_matrix(&e, &x).unwrap(), &x);
    assert!(csv.starts_with("model_id,feature,feature_value,phi\n"));
    assert_eq!(csv.lines().count(), 11);
}
