use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use perfpredict::baselines::{fit_log_linear, fit_power_law, scale_points, LogLinear, PowerLawFit};
use perfpredict::gbtree::{fit_gbt, TreeEnsemble};
use perfpredict::metabias::{bias_audit, default_audit_levels, default_audit_tasks};
use perfpredict::pipeline::{
    compare_feature_sets, grid_search, greedy_select, multi_seed_cv, CVResult, Comparison, PredictorKind,
    SelectionTrace,
};
use perfpredict::registry::{
    candidate_feature_names, encode_features, encode_records, join_scores, load_scores, score_violations,
    CsvMapping, Dataset, FeatureMatrix, MetricKind, Registry, RegistryError, RegistryFormat, ScoreRecord,
    TaskSpec, Violation, SCALING_FEATURES,
};
use perfpredict::shap::{
    dependence_csv, ranking_csv, shap_csv, shap_dependence, shap_matrix, shap_summary_grouped,
};
use perfpredict::stats::{bh_fdr, mean_ci95, MeanCi};
use perfpredict::synthdata::{gen_registry, Effect, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::cache::{digest, write_atomic, Cache};
use crate::config::{config_error, Config};
use crate::table::Table;
use crate::{Cli, Command, Global, PlotKind};

pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.jobs {
        if n == 0 {
            return Err(config_error("--jobs must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Validate => validate(g),
        Command::Synth { n_models, noise } => synth(g, *n_models, *noise),
        cmd => {
            let ctx = Context::load(g)?;
            match cmd {
                Command::Encode { features } => ctx.encode(features),
                Command::FitScaling => ctx.fit_scaling(),
                Command::Cv { predictor, features } => ctx.cv(predictor, features),
                Command::Select { candidates } => ctx.select(candidates),
                Command::Compare { features_a, features_b } => ctx.compare(features_a, features_b),
                Command::Shap { features } => ctx.shap(features),
                Command::BiasAudit => ctx.bias_audit(),
                Command::Report { predictors, features } => ctx.report(predictors, features),
                Command::PlotData { kind, feature, grid_size, features } => {
                    ctx.plot_data(*kind, feature.as_deref(), *grid_size, features)
                }
                Command::Validate | Command::Synth { .. } => unreachable!(),
            }
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| config_error(format!("{flag} is required")))
}

fn registry_format(g: &Global) -> Result<RegistryFormat> {
    match &g.mapping {
        Some(m) => {
            let text = std::fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
            Ok(RegistryFormat::CsvWithMapping(CsvMapping::from_json_str(&text)?))
        }
        None => Ok(RegistryFormat::CanonicalJson),
    }
}

fn read_bytes(p: &Path) -> Result<Vec<u8>> {
    std::fs::read(p).with_context(|| format!("reading {}", p.display()))
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    let path = out.join(name);
    write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(out: &Path, name: &str, v: &T) -> Result<()> {
    write(out, name, &(serde_json::to_string_pretty(v)? + "\n"))
}

/// Task key made safe for file names.
fn slug(key: &str) -> String {
    key.replace('@', "_")
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn scale_features() -> Vec<String> {
    names(&SCALING_FEATURES)
}

pub fn all_features() -> Vec<String> {
    let mut f = scale_features();
    f.extend(candidate_feature_names());
    f
}

fn or_default(given: &[String], default: impl FnOnce() -> Vec<String>) -> Vec<String> {
    if given.is_empty() {
        default()
    } else {
        given.to_vec()
    }
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    n_models: Option<usize>,
    n_scores: Option<usize>,
    violations: Vec<Violation>,
}

fn file_violation(field: &str, e: &RegistryError) -> Violation {
    Violation {
        model_id: None,
        field: field.to_string(),
        message: e.to_string(),
    }
}

fn validate(g: &Global) -> Result<u8> {
    let reg_path = required(&g.registry, "--registry")?;
    let format = registry_format(g)?;
    let mut violations = Vec::new();
    let registry = match Registry::load(reg_path, &format) {
        Ok(r) => Some(r),
        Err(e @ RegistryError::Io { .. }) => return Err(e.into()),
        Err(RegistryError::Invalid(v)) => {
            violations.extend(v);
            None
        }
        Err(e) => {
            violations.push(file_violation("registry", &e));
            None
        }
    };
    let mut n_scores = None;
    if let Some(p) = &g.scores {
        match load_scores(p) {
            Ok(scores) => {
                n_scores = Some(scores.len());
                if let Some(r) = &registry {
                    violations.extend(score_violations(r, &scores));
                }
            }
            Err(e @ RegistryError::Io { .. }) => return Err(e.into()),
            Err(e) => violations.push(file_violation("scores", &e)),
        }
    }
    let report = ValidationReport {
        n_models: registry.as_ref().map(Registry::len),
        n_scores,
        violations,
    };
    write_json(&g.out, "validation.json", &report)?;
    if report.violations.is_empty() {
        println!(
            "OK: {} models, {} scores",
            report.n_models.unwrap_or(0),
            report.n_scores.map_or("no".to_string(), |n| n.to_string())
        );
        Ok(0)
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        println!("{} violation(s)", report.violations.len());
        Ok(1)
    }
}

/// Default synthetic registry: log-linear scale response plus planted code
/// share and RoPE effects on three accuracy tasks.
pub fn synth_specs(n_models: usize, noise: f64) -> Vec<SynthSpec> {
    ["synth_a", "synth_b", "synth_c"]
        .iter()
        .enumerate()
        .map(|(i, id)| {
            SynthSpec::log_linear(n_models, -0.6, 0.06, 0.03)
                .with_task(TaskSpec::new(*id, 0, MetricKind::Accuracy).with_items(1000 * (i as u64 + 1)))
                .with_effect(Effect::Linear {
                    feature: "pct_code".into(),
                    coef: [0.004, -0.002, 0.001][i],
                })
                .with_effect(Effect::Level {
                    feature: "positional_embeddings".into(),
                    level: "rope".into(),
                    shift: 0.05,
                })
                .with_noise(noise * (1.0 + i as f64))
                .with_missing_rate(0.2)
        })
        .collect()
}

fn synth(g: &Global, n_models: usize, noise: f64) -> Result<u8> {
    let specs = synth_specs(n_models, noise);
    let mut scores = Vec::new();
    let mut truths = Vec::new();
    let mut registry = None;
    for spec in &specs {
        // records depend only on the seed, so every task shares the registry
        let s = gen_registry(spec, g.seed)?;
        scores.extend(s.scores);
        truths.push(s.truth);
        registry = Some(s.registry);
    }
    let registry = registry.expect("at least one task");
    write(&g.out, "registry.json", &registry.to_json_string())?;
    write(&g.out, "scores.csv", &perfpredict::registry::write_scores(&scores))?;
    write_json(&g.out, "truth.json", &truths)?;
    println!("wrote {} models and {} scores to {}", registry.len(), scores.len(), g.out.display());
    Ok(0)
}

/// Distinct settings present in `scores`, sorted by key. Benchmark sizes come
/// from the reference suite when the setting is part of it.
pub fn tasks_in(scores: &[ScoreRecord]) -> Vec<TaskSpec> {
    let suite = TaskSpec::reference_suite();
    let mut seen = BTreeSet::new();
    for s in scores {
        seen.insert((s.task_id.clone(), s.shots, s.metric_kind.as_str()));
    }
    let mut out: Vec<TaskSpec> = seen
        .into_iter()
        .map(|(id, shots, kind)| {
            let kind = MetricKind::parse(kind).expect("round-trips");
            suite
                .iter()
                .find(|t| t.task_id == id && t.shots == shots && t.metric_kind == kind)
                .cloned()
                .unwrap_or_else(|| TaskSpec::new(id, shots, kind))
        })
        .collect();
    out.sort_by_key(TaskSpec::key);
    out
}

pub struct Context {
    pub registry: Registry,
    pub scores: Vec<ScoreRecord>,
    pub tasks: Vec<TaskSpec>,
    pub config: Config,
    pub seeds: Vec<u64>,
    pub seed: u64,
    pub out: PathBuf,
    /// Hash of the input files and configuration.
    pub input_digest: String,
    pub task_filter: Option<String>,
    cache: Cache,
}

impl Context {
    pub fn load(g: &Global) -> Result<Self> {
        let reg_path = required(&g.registry, "--registry")?;
        let scores_path = required(&g.scores, "--scores")?;
        let registry = Registry::load(reg_path, &registry_format(g)?)?;
        let scores = load_scores(scores_path)?;
        let config = match &g.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut tasks = tasks_in(&scores);
        if let Some(sel) = &g.task {
            tasks.retain(|t| &t.key() == sel || &t.task_id == sel);
            if tasks.is_empty() {
                return Err(config_error(format!("no scores for task {sel:?}")));
            }
        }
        let seeds = config.seeds(g.seed, g.seeds)?;
        // the canonical registry covers both the source file and any mapping
        let input_digest = digest(&[
            registry.to_json_string().as_bytes(),
            &read_bytes(scores_path)?,
            serde_json::to_string(&config)?.as_bytes(),
        ]);
        Ok(Self {
            registry,
            scores,
            tasks,
            config,
            seeds,
            seed: g.seed,
            out: g.out.clone(),
            input_digest,
            task_filter: g.task.clone(),
            cache: Cache::new(&g.out),
        })
    }

    fn dataset(&self, task: &TaskSpec) -> Result<Dataset> {
        Ok(join_scores(&self.registry, &self.scores, task)?)
    }

    fn key(&self, parts: &[&str]) -> String {
        let mut all: Vec<&[u8]> = vec![self.input_digest.as_bytes()];
        all.extend(parts.iter().map(|p| p.as_bytes()));
        digest(&all)
    }

    fn encode(&self, features: &[String]) -> Result<u8> {
        let features = or_default(features, all_features);
        if self.tasks.len() == 1 {
            let t = &self.tasks[0];
            let x = encode_features(&self.dataset(t)?, &features)?;
            write(&self.out, &format!("features-{}.csv", slug(&t.key())), &x.to_csv())?;
            println!("encoded {} models x {} columns", x.n_rows(), x.n_cols());
        } else {
            let x = encode_records(self.registry.records(), &features)?;
            write(&self.out, "features.csv", &x.to_csv())?;
            println!("encoded {} models x {} columns", x.n_rows(), x.n_cols());
        }
        Ok(0)
    }

    fn fit_scaling(&self) -> Result<u8> {
        #[derive(Serialize)]
        struct Fit {
            task: String,
            n_models: usize,
            power_law: Option<PowerLawFit>,
            log_linear: Option<LogLinear>,
            error: Option<String>,
        }
        let mut fits = Vec::new();
        let mut t = Table::new(&["task", "n", "R2", "Nc", "Dc", "alpha_N", "alpha_D"]);
        for task in &self.tasks {
            let d = self.dataset(task)?;
            let pts = scale_points(&d);
            let pl = fit_power_law(&pts, task.polarity);
            let ll = fit_log_linear(&pts).ok();
            match &pl {
                Ok(f) => t.push(vec![
                    task.key(),
                    d.len().to_string(),
                    format!("{:.3}", f.r_squared),
                    format!("{:.3e}", f.params.nc),
                    format!("{:.3e}", f.params.dc),
                    format!("{:.4}", f.params.alpha_n),
                    format!("{:.4}", f.params.alpha_d),
                ]),
                Err(_) => {
                    let mut row = vec![task.key(), d.len().to_string()];
                    row.extend(std::iter::repeat("unavailable".to_string()).take(5));
                    t.push(row);
                }
            }
            fits.push(Fit {
                task: task.key(),
                n_models: d.len(),
                error: pl.as_ref().err().map(|e| e.to_string()),
                power_law: pl.ok(),
                log_linear: ll,
            });
        }
        write_json(&self.out, "fit-scaling.json", &fits)?;
        write(&self.out, "fit-scaling.csv", &t.to_csv())?;
        write(&self.out, "fit-scaling.md", &t.to_markdown())?;
        print!("{}", t.to_markdown());
        Ok(0)
    }

    /// Multi-seed CV results, cached by inputs, task, predictor, features and seeds.
    pub fn cv_results(&self, task: &TaskSpec, kind: PredictorKind, features: &[String]) -> Result<Vec<CVResult>> {
        let key = self.key(&[
            "cv",
            &task.key(),
            &serde_json::to_string(&kind)?,
            &features.join(","),
            &serde_json::to_string(&self.seeds)?,
        ]);
        self.cache.get_or_compute("cv", &key, || {
            let d = self.dataset(task)?;
            Ok(multi_seed_cv(&d, features, kind, &self.seeds, &self.config.grid(), self.config.settings())?)
        })
    }

    fn cv(&self, predictor: &str, features: &[String]) -> Result<u8> {
        let kind = PredictorKind::parse(predictor).ok_or_else(|| config_error(format!("unknown predictor {predictor:?}")))?;
        let features = or_default(features, scale_features);
        let mut t = Table::new(&["task", "predictor", "seeds", "mean_mae", "ci95_halfwidth"]);
        for task in &self.tasks {
            let results = self.cv_results(task, kind, &features)?;
            write_json(&self.out, &format!("cv-{}-{predictor}.json", slug(&task.key())), &results)?;
            let maes: Vec<f64> = results.iter().map(|r| r.mae).collect();
            let (mean, half) = mean_and_half(&maes);
            t.push(vec![task.key(), predictor.to_string(), maes.len().to_string(), mean, half]);
        }
        write(&self.out, &format!("cv-{predictor}.csv"), &t.to_csv())?;
        print!("{}", t.to_markdown());
        Ok(0)
    }

    fn select(&self, candidates: &[String]) -> Result<u8> {
        let candidates = or_default(candidates, candidate_feature_names);
        let mut t = Table::new(&["task", "step", "added_feature", "mean_mae_after", "improvement"]);
        for task in &self.tasks {
            let key = self.key(&["select", &task.key(), &candidates.join(","), &serde_json::to_string(&self.seeds)?]);
            let trace: SelectionTrace = self.cache.get_or_compute("select", &key, || {
                let d = self.dataset(task)?;
                Ok(greedy_select(
                    &d,
                    &candidates,
                    self.config.settings(),
                    &self.config.grid(),
                    &self.seeds,
                    self.config.tol,
                )?)
            })?;
            write_json(&self.out, &format!("select-{}.json", slug(&task.key())), &trace)?;
            t.push(vec![task.key(), "0".into(), "(scale only)".into(), trace.base_mae.to_string(), String::new()]);
            for (i, s) in trace.steps.iter().enumerate() {
                t.push(vec![
                    task.key(),
                    (i + 1).to_string(),
                    s.added_feature.clone(),
                    s.mean_mae_after.to_string(),
                    s.improvement.to_string(),
                ]);
            }
        }
        write(&self.out, "select.csv", &t.to_csv())?;
        print!("{}", t.to_markdown());
        Ok(0)
    }

    fn compare(&self, a: &[String], b: &[String]) -> Result<u8> {
        let a = or_default(a, scale_features);
        let b = or_default(b, all_features);
        let mut comps: Vec<Comparison> = Vec::new();
        for task in &self.tasks {
            let d = self.dataset(task)?;
            comps.push(compare_feature_sets(&d, &a, &b, &self.seeds, &self.config.grid(), self.config.settings())?);
        }
        let corrected = corrected_p(comps.iter().map(|c| c.test.map(|t| t.p_two_sided)))?;
        let mut t = Table::new(&["task", "mae_a", "ci95_a", "mae_b", "ci95_b", "p_corrected"]);
        for (c, p) in comps.iter().zip(&corrected) {
            let (ma, ha) = mean_and_half(&c.mae_a);
            let (mb, hb) = mean_and_half(&c.mae_b);
            t.push(vec![c.task.clone(), ma, ha, mb, hb, p.map_or(String::new(), |p| p.to_string())]);
        }
        write_json(&self.out, "compare.json", &comps)?;
        write(&self.out, "compare.csv", &t.to_csv())?;
        print!("{}", t.to_markdown());
        Ok(0)
    }

    /// Grid-search the whole dataset, then fit once with the winner.
    pub fn fit_full(&self, task: &TaskSpec, features: &[String]) -> Result<(TreeEnsemble, FeatureMatrix)> {
        let d = self.dataset(task)?;
        let x = encode_features(&d, features)?;
        let y = d.targets();
        let best = grid_search(&x, &y, &self.config.grid(), self.config.inner_folds, self.seed)?.best;
        Ok((fit_gbt(&x, &y, &best.with_seed(self.seed))?, x))
    }

    fn shap(&self, features: &[String]) -> Result<u8> {
        let features = or_default(features, all_features);
        let mut t = Table::new(&["task", "rank", "feature", "mean_abs_phi"]);
        for task in &self.tasks {
            let (e, x) = self.fit_full(task, &features)?;
            let m = shap_matrix(&e, &x)?;
            let summary = shap_summary_grouped(&e, &x)?;
            let s = slug(&task.key());
            write(&self.out, &format!("model-{s}.json"), &e.to_json())?;
            write(&self.out, &format!("shap-{s}.csv"), &shap_csv(&m, &x))?;
            write(&self.out, &format!("ranking-{s}.csv"), &ranking_csv(&summary))?;
            for (k, f) in summary.iter().take(10).enumerate() {
                t.push(vec![task.key(), (k + 1).to_string(), f.feature.clone(), format!("{:.5}", f.mean_abs_phi)]);
            }
        }
        print!("{}", t.to_markdown());
        Ok(0)
    }

    fn bias_audit(&self) -> Result<u8> {
        // without --task, the default accuracy settings are audited when present
        let defaults: Vec<TaskSpec> = default_audit_tasks().into_iter().filter(|t| self.tasks.contains(t)).collect();
        let tasks = if self.task_filter.is_none() && !defaults.is_empty() { defaults } else { self.tasks.clone() };
        let audit = bias_audit(&self.registry, &self.scores, &tasks, &default_audit_levels(), self.config.weights)?;
        write_json(&self.out, "bias-audit.json", &audit)?;
        write(&self.out, "bias-audit.csv", &audit.to_csv())?;
        write(&self.out, "bias-audit.md", &audit.to_markdown())?;
        print!("{}", audit.to_markdown());
        Ok(0)
    }

    fn report(&self, predictors: &[String], features: &[String]) -> Result<u8> {
        let features = or_default(features, all_features);
        let rows = self.report_rows(predictors, &features)?;
        let table = report_table(&rows, false);
        write_json(&self.out, "report.json", &rows)?;
        write(&self.out, "report.csv", &table.to_csv())?;
        let display = report_table(&rows, true).to_markdown();
        write(&self.out, "report.md", &display)?;
        print!("{display}");
        Ok(0)
    }

    /// Per-task MAE summary; tasks whose data cannot be evaluated are marked unavailable.
    pub fn report_rows(&self, predictors: &[String], features: &[String]) -> Result<Vec<ReportRow>> {
        for p in predictors {
            if !["median", "log_linear", "scaling", "all"].contains(&p.as_str()) {
                return Err(config_error(format!("unknown report column {p:?}")));
            }
        }
        let want = |p: &str| predictors.iter().any(|q| q == p);
        let mut rows: Vec<ReportRow> = self
            .tasks
            .iter()
            .map(|task| {
                let maes = |kind, f: &[String]| -> Result<Vec<f64>> {
                    Ok(self.cv_results(task, kind, f)?.iter().map(|r| r.mae).collect())
                };
                let summary = |p: &str, kind, f: &[String]| -> Result<Option<Vec<f64>>> {
                    if want(p) {
                        maes(kind, f).map(Some)
                    } else {
                        Ok(None)
                    }
                };
                let computed = (|| -> Result<_> {
                    Ok((
                        summary("median", PredictorKind::Median, &scale_features())?,
                        summary("log_linear", PredictorKind::LogLinear, &scale_features())?,
                        summary("scaling", PredictorKind::Gbt, &scale_features())?,
                        summary("all", PredictorKind::Gbt, features)?,
                    ))
                })();
                match computed {
                    Ok((median, log_linear, scaling, all)) => ReportRow {
                        task: task.key(),
                        metric_kind: task.metric_kind,
                        median: median.map(|m| mean(&m)),
                        log_linear: log_linear.map(|m| mean(&m)),
                        p_raw: match (&scaling, &all) {
                            (Some(a), Some(b)) if a.len() >= 2 => {
                                perfpredict::stats::paired_t_test(a, b).ok().map(|t| t.p_two_sided)
                            }
                            _ => None,
                        },
                        scaling: scaling.map(|m| summarize(&m)),
                        all: all.map(|m| summarize(&m)),
                        p_corrected: None,
                        unavailable: None,
                    },
                    Err(e) => ReportRow::unavailable(task, e.to_string()),
                }
            })
            .collect();
        let corrected = corrected_p(rows.iter().map(|r| r.p_raw))?;
        for (r, p) in rows.iter_mut().zip(corrected) {
            r.p_corrected = p;
        }
        Ok(rows)
    }

    fn plot_data(&self, kind: PlotKind, feature: Option<&str>, grid_size: usize, features: &[String]) -> Result<u8> {
        let features = or_default(features, all_features);
        for task in &self.tasks {
            let s = slug(&task.key());
            match kind {
                PlotKind::ScalingHeatmap => {
                    let d = self.dataset(task)?;
                    let csv = scaling_heatmap(&d, grid_size)?;
                    write(&self.out, &format!("heatmap-{s}.csv"), &csv)?;
                }
                PlotKind::ShapBeeswarm => {
                    let (e, x) = self.fit_full(task, &features)?;
                    write(&self.out, &format!("beeswarm-{s}.csv"), &shap_csv(&shap_matrix(&e, &x)?, &x))?;
                    write(&self.out, &format!("ranking-{s}.csv"), &ranking_csv(&shap_summary_grouped(&e, &x)?))?;
                }
                PlotKind::ShapDependence => {
                    let f = feature.ok_or_else(|| config_error("--feature is required for shap-dependence"))?;
                    let (e, x) = self.fit_full(task, &features)?;
                    let dep = shap_dependence(&e, &x, f)?;
                    write(&self.out, &format!("dependence-{s}-{f}.csv"), &dependence_csv(&dep))?;
                }
            }
        }
        println!("wrote plot data for {} task(s) to {}", self.tasks.len(), self.out.display());
        Ok(0)
    }
}

/// Log-spaced (N, D) grid of fitted scores followed by the observed models.
/// Columns: kind, model_id, n_params, tokens_billions, score.
pub fn scaling_heatmap(d: &Dataset, grid_size: usize) -> Result<String> {
    if grid_size < 2 {
        return Err(config_error("--grid-size must be at least 2"));
    }
    let pts = scale_points(d);
    let fit = fit_power_law(&pts, d.task.polarity)?;
    let range = |f: &dyn Fn(&perfpredict::baselines::ScalePoint) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min).log10();
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max).log10();
        (lo, hi)
    };
    let (n0, n1) = range(&|p| p.n);
    let (d0, d1) = range(&|p| p.d);
    let step = |lo: f64, hi: f64, i: usize| 10f64.powf(lo + (hi - lo) * i as f64 / (grid_size - 1) as f64);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "model_id", "n_params", "tokens_billions", "score"])?;
    for i in 0..grid_size {
        for j in 0..grid_size {
            let (n, dd) = (step(n0, n1, i), step(d0, d1, j));
            let s = fit.predict_score(n, dd)?;
            w.write_record(["grid", "", &n.to_string(), &(dd / 1e9).to_string(), &s.to_string()])?;
        }
    }
    for r in &d.rows {
        w.write_record([
            "model",
            r.record.model_id.as_str(),
            &r.record.arch.total_params.to_string(),
            &r.record.data.total_tokens_billions.to_string(),
            &r.value.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(v: &[f64]) -> MaeSummary {
    MaeSummary {
        mean: mean(v),
        ci95: mean_ci95(v).ok().map(|c: MeanCi| c.halfwidth),
    }
}

fn mean_and_half(v: &[f64]) -> (String, String) {
    let s = summarize(v);
    (s.mean.to_string(), s.ci95.map_or(String::new(), |h| h.to_string()))
}

/// BH-adjusted p-values over the available entries, in input order.
fn corrected_p(ps: impl Iterator<Item = Option<f64>>) -> Result<Vec<Option<f64>>> {
    let ps: Vec<Option<f64>> = ps.collect();
    let present: Vec<f64> = ps.iter().flatten().copied().collect();
    let adjusted = bh_fdr(&present, 0.05)?.adjusted;
    let mut it = adjusted.into_iter();
    Ok(ps.iter().map(|p| p.map(|_| it.next().expect("one per p"))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeSummary {
    pub mean: f64,
    pub ci95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub metric_kind: MetricKind,
    pub median: Option<f64>,
    pub log_linear: Option<f64>,
    pub scaling: Option<MaeSummary>,
    pub all: Option<MaeSummary>,
    pub p_raw: Option<f64>,
    pub p_corrected: Option<f64>,
    pub unavailable: Option<String>,
}

impl ReportRow {
    fn unavailable(task: &TaskSpec, reason: String) -> Self {
        Self {
            task: task.key(),
            metric_kind: task.metric_kind,
            median: None,
            log_linear: None,
            scaling: None,
            all: None,
            p_raw: None,
            p_corrected: None,
            unavailable: Some(reason),
        }
    }
}

/// With `display`, values are scaled by 100 (percent for accuracy-type
/// metrics, Brier ×100) and rounded; otherwise natural units at full precision.
pub fn report_table(rows: &[ReportRow], display: bool) -> Table {
    let mut t = Table::new(&[
        "task",
        "metric",
        "baseline_mae",
        "log_linear_mae",
        "scaling_mae",
        "scaling_ci95",
        "all_features_mae",
        "all_features_ci95",
        "p_corrected",
    ]);
    for r in rows {
        let pct = if r.metric_kind == MetricKind::Brier { "" } else { "%" };
        let fmt = |v: Option<f64>| match v {
            None => if display { "-".to_string() } else { String::new() },
            Some(v) if display => format!("{:.2}{pct}", 100.0 * v),
            Some(v) => v.to_string(),
        };
        let half = |v: Option<f64>| match v {
            None => if display { "-".to_string() } else { String::new() },
            Some(v) if display => format!("±{:.2}", 100.0 * v),
            Some(v) => v.to_string(),
        };
        if let Some(reason) = &r.unavailable {
            let mut row = vec![r.task.clone(), r.metric_kind.as_str().to_string()];
            row.extend(std::iter::repeat("unavailable".to_string()).take(6));
            row.push(if display { reason.replace('|', "/") } else { reason.clone() });
            t.push(row);
            continue;
        }
        t.push(vec![
            r.task.clone(),
            r.metric_kind.as_str().to_string(),
            fmt(r.median),
            fmt(r.log_linear),
            fmt(r.scaling.map(|s| s.mean)),
            half(r.scaling.and_then(|s| s.ci95)),
            fmt(r.all.map(|s| s.mean)),
            half(r.all.and_then(|s| s.ci95)),
            match r.p_corrected {
                None => if display { "-".to_string() } else { String::new() },
                Some(p) if display => format!("{p:.2e}"),
                Some(p) => p.to_string(),
            },
        ]);
    }
    t
}
