use perfpredict::baselines::median;
use perfpredict::gbtree::GBTConfig;
use perfpredict::pipeline::*;
use perfpredict::registry::{Dataset, DatasetRow, MetricKind, ModelRecord, TaskSpec};
use perfpredict::synthdata::{gen_registry, Effect, SynthSpec};
use proptest::prelude::*;

fn dataset_from(values: &[f64]) -> Dataset {
    Dataset {
        task: TaskSpec::new("t", 0, MetricKind::Accuracy),
        rows: values
            .iter()
            .enumerate()
            .map(|(i, &v)| DatasetRow {
                record: ModelRecord::new(format!("m{i:02}"), 10f64.powf(8.0 + 0.1 * i as f64), 100.0 + 37.0 * (i % 5) as f64),
                value: v,
            })
            .collect(),
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn scale() -> Vec<String> {
    names(&["total_params", "total_tokens_billions"])
}

fn small_grid() -> Vec<GBTConfig> {
    vec![GBTConfig::new(2, 0.3, 20), GBTConfig::new(3, 0.3, 20)]
}

#[test]
fn constant_targets_give_zero_mae() {
    let d = dataset_from(&[0.42; 12]);
    let plan = CVPlan::new(&d, 3, 3, 1).unwrap();
    for kind in [PredictorKind::Median, PredictorKind::LogLinear, PredictorKind::PowerLaw, PredictorKind::Gbt] {
        let r = run_cv(&d, &scale(), kind, &plan, &small_grid()).unwrap();
        assert!(r.mae < 1e-12, "{kind:?}: {}", r.mae);
    }
}

#[test]
fn median_matches_fold_enumeration() {
    let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
    let d = dataset_from(&y);
    let plan = CVPlan::new(&d, 3, 3, 2024).unwrap();
    let r = run_cv(&d, &scale(), PredictorKind::Median, &plan, &[]).unwrap();
    // enumerate folds independently from the stored assignment
    let mut total = 0.0;
    for f in 0..3 {
        let train: Vec<f64> = (0..9).filter(|&i| plan.fold_assignment[&format!("m{i:02}")] != f).map(|i| y[i]).collect();
        let mut sorted = train.clone();
        sorted.sort_by(f64::total_cmp);
        let med = (sorted[2] + sorted[3]) / 2.0; // 6 training rows
        assert_eq!(med, median(&train).unwrap());
        for i in (0..9).filter(|&i| plan.fold_assignment[&format!("m{i:02}")] == f) {
            total += (y[i] - med).abs();
        }
    }
    assert!((r.mae - total / 9.0).abs() < 1e-15);
    // every model predicted exactly once, by a fold that held it out
    for p in &r.predictions {
        assert_eq!(p.fold, plan.fold_assignment[&p.model_id]);
    }
}

#[test]
fn too_few_rows_or_empty_grid() {
    let d = dataset_from(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
    let plan = CVPlan::new(&d, 3, 3, 1).unwrap();
    assert!(run_cv(&d, &scale(), PredictorKind::Median, &plan, &[]).is_err());
    let d = dataset_from(&[0.1; 9]);
    let plan = CVPlan::new(&d, 3, 3, 1).unwrap();
    assert!(run_cv(&d, &scale(), PredictorKind::Gbt, &plan, &[]).is_err());
}

#[test]
fn grid_search_picks_depth_for_xor() {
    use perfpredict::registry::FeatureMatrix;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for rep in 0..6 {
        for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            rows.push(vec![a, b, rep as f64 * 0.0]);
            y.push(if (a + b) as i32 == 1 { 1.0 } else { 0.0 });
        }
    }
    let x = FeatureMatrix::from_plain_rows(&rows);
    let grid = vec![
        GBTConfig::new(1, 0.3, 50).with_min_samples_leaf(1),
        GBTConfig::new(2, 0.3, 50).with_min_samples_leaf(1),
    ];
    let r = grid_search(&x, &y, &grid, 3, 9).unwrap();
    assert_eq!(r.best.max_depth, 2);
    assert!(r.scores[0] > r.scores[1] + 0.1);
    let one = grid_search(&x, &y, &grid[..1], 3, 9).unwrap();
    assert_eq!(one.best, grid[0]);
    assert!(one.scores.is_empty());
    let full = grid_search(&x, &y, &default_grid(), 3, 9).unwrap();
    assert_eq!(full.scores.len(), 18);
}

fn planted(seed: u64) -> Dataset {
    let spec = SynthSpec::log_linear(45, -0.6, 0.06, 0.03)
        .with_effect(Effect::Linear { feature: "pct_code".into(), coef: 0.005 })
        .with_noise(0.002);
    let s = gen_registry(&spec, seed).unwrap();
    assert_eq!(s.truth.n_clamped, 0, "scores must stay in range");
    s.dataset().unwrap()
}

#[test]
fn multi_seed_matches_run_cv_and_reproduces() {
    let d = planted(1);
    let one = multi_seed_mae(&d, &scale(), PredictorKind::Gbt, &[17], &small_grid(), CvSettings::default()).unwrap();
    let plan = CVPlan::new(&d, 3, 3, 17).unwrap();
    assert_eq!(one, vec![run_cv(&d, &scale(), PredictorKind::Gbt, &plan, &small_grid()).unwrap().mae]);
    let seeds = [3, 1, 2];
    let a = multi_seed_mae(&d, &scale(), PredictorKind::LogLinear, &seeds, &[], CvSettings::default()).unwrap();
    let b = multi_seed_mae(&d, &scale(), PredictorKind::LogLinear, &seeds, &[], CvSettings::default()).unwrap();
    assert_eq!(a, b);
    assert!(multi_seed_mae(&d, &scale(), PredictorKind::Median, &[1, 1], &[], CvSettings::default()).is_err());

    let c = dataset_from(&[0.3; 12]);
    let seeds: Vec<u64> = (0..50).collect();
    let z = multi_seed_mae(&c, &scale(), PredictorKind::Median, &seeds, &[], CvSettings::default()).unwrap();
    assert_eq!(z, vec![0.0; 50]);
}

#[test]
fn singleton_grid_equals_direct_fit() {
    use perfpredict::gbtree::fit_gbt;
    use perfpredict::registry::encode_features;
    let d = planted(2);
    let cfg = GBTConfig::new(3, 0.1, 30);
    let plan = CVPlan::new(&d, 3, 3, 5).unwrap();
    let r = run_cv(&d, &scale(), PredictorKind::Gbt, &plan, &[cfg]).unwrap();
    let x = encode_features(&d, &scale()).unwrap();
    let y = d.targets();
    for f in 0..3 {
        let train: Vec<usize> = (0..d.len()).filter(|&i| r.predictions[i].fold != f).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let m = fit_gbt(&x.select_rows(&train), &ty, &cfg).unwrap();
        for i in (0..d.len()).filter(|&i| r.predictions[i].fold == f) {
            assert_eq!(m.predict(x.row(i)).unwrap().to_bits(), r.predictions[i].predicted.to_bits());
        }
    }
}

#[test]
fn greedy_selection_finds_planted_feature() {
    let d = planted(3);
    let empty = greedy_select(&d, &[], CvSettings::default(), &small_grid(), &[1, 2, 3, 4, 5], SELECTION_TOL).unwrap();
    assert!(empty.steps.is_empty());
    assert_eq!(empty.final_features, scale());

    let t = greedy_select(
        &d,
        &names(&["pct_code", "pct_books"]),
        CvSettings::default(),
        &small_grid(),
        &[1, 2, 3, 4, 5],
        SELECTION_TOL,
    )
    .unwrap();
    assert_eq!(t.steps[0].added_feature, "pct_code");
    assert_eq!(&t.final_features[..2], &scale()[..]);
    assert!(t.steps.iter().all(|s| s.improvement >= SELECTION_TOL));
    assert!(greedy_select(&d, &names(&["total_params"]), CvSettings::default(), &small_grid(), &[1], 1e-4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition(n in 3usize..100, k in 2usize..6, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let a = assign_folds(&refs, k, seed);
        prop_assert_eq!(a.len(), n);
        let mut sizes = vec![0usize; k];
        for id in &ids {
            let f = a[id];
            prop_assert!(f < k);
            sizes[f] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
