//! Small-study bias audit for architecture effects.
//!
//! Each task yields a one-vs-rest contrast for a categorical level, estimated
//! by weighted least squares with log-scale controls. The per-task effects are
//! pooled with PET-PEESE: PET regresses effects on their standard errors,
//! PEESE on squared standard errors, both weighted by 1/SE². The PET slope
//! test doubles as Egger's test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::wls;
use crate::registry::{
    join_scores, Categorical, Dataset, MetricKind, Registry, ScoreRecord, TaskSpec,
};
use crate::stats::{t_critical, t_two_sided_p};

/// Smallest group on either side of a contrast.
pub const MIN_GROUP: usize = 3;
/// Smallest number of task effects that can be pooled.
pub const MIN_TASKS: usize = 3;
/// One-tailed level of the PET intercept test that switches to PEESE.
pub const PET_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEffect {
    pub task_id: String,
    pub y: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// `n_items / (s(1 - s))` for accuracy-type tasks with a known size, else 1.
    Binomial,
    Uniform,
}

impl WeightPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "binomial" => Some(Self::Binomial),
            "uniform" => Some(Self::Uniform),
            _ => None,
        }
    }
}

/// Scores are clamped to this distance from 0 and 1 before taking `s(1 - s)`.
const SCORE_CLAMP: f64 = 0.01;

pub fn precision_weights(dataset: &Dataset, policy: WeightPolicy) -> Vec<f64> {
    let binomial = matches!(dataset.task.metric_kind, MetricKind::Accuracy | MetricKind::PassAt1);
    match (policy, dataset.task.n_items) {
        (WeightPolicy::Binomial, Some(n)) if binomial => dataset
            .rows
            .iter()
            .map(|r| {
                let s = r.value.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
                n as f64 / (s * (1.0 - s))
            })
            .collect(),
        _ => vec![1.0; dataset.len()],
    }
}

/// One-vs-rest contrast of `level` against the other documented levels of
/// `feature`. Models that leave the feature undocumented are excluded.
pub fn estimate_contrast(
    dataset: &Dataset,
    feature: Categorical,
    level: &str,
    weights: &[f64],
) -> Result<TaskEffect> {
    if weights.len() != dataset.len() {
        return Err(invalid(format!(
            "{} weights for {} models",
            weights.len(),
            dataset.len()
        )));
    }
    let level = feature.parse_level(level).map_err(invalid)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut members = 0;
    for (row, &wi) in dataset.rows.iter().zip(weights) {
        let Some(held) = row.record.arch.level(feature) else {
            continue;
        };
        let ind = if held == level { 1.0 } else { 0.0 };
        members += (held == level) as usize;
        x.push(vec![
            1.0,
            ind,
            row.record.arch.total_params.log10(),
            row.record.total_tokens().log10(),
        ]);
        y.push(row.value);
        w.push(wi);
    }
    let rest = y.len() - members;
    if members < MIN_GROUP || rest < MIN_GROUP {
        return Err(invalid(format!(
            "{} on {}: {members} models with the level and {rest} without; need {MIN_GROUP} each",
            feature.name(),
            dataset.task.key()
        )));
    }
    let fit = wls(&x, &y, &w)?;
    let se = fit.std_errors[1];
    if !(se > 0.0) {
        return Err(Error::Degenerate(format!(
            "contrast on {} fits exactly; its standard error is zero",
            dataset.task.key()
        )));
    }
    Ok(TaskEffect {
        task_id: dataset.task.key(),
        y: fit.coefficients[1],
        se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaRegression {
    pub intercept: f64,
    pub intercept_se: f64,
    pub intercept_p: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub slope_p: f64,
    pub df: usize,
}

/// Two-sided p of a coefficient. An exact fit has zero standard error; its
/// coefficients count as significant unless they vanish at the data's scale.
fn coef_p(coef: f64, se: f64, df: usize, scale: f64) -> f64 {
    if se > 0.0 {
        t_two_sided_p(coef / se, df as f64)
    } else if coef.abs() <= 1e-12 * scale {
        1.0
    } else {
        0.0
    }
}

fn meta_regress(effects: &[TaskEffect], regressor: impl Fn(f64) -> f64) -> Result<MetaRegression> {
    if effects.len() < MIN_TASKS {
        return Err(invalid(format!(
            "meta-regression needs at least {MIN_TASKS} task effects, got {}",
            effects.len()
        )));
    }
    if let Some(e) = effects.iter().find(|e| !(e.se > 0.0 && e.se.is_finite() && e.y.is_finite())) {
        return Err(invalid(format!("task {}: effect and positive standard error required", e.task_id)));
    }
    if effects.iter().all(|e| e.se == effects[0].se) {
        return Err(Error::RankDeficient { rank: 1, cols: 2 });
    }
    let x: Vec<Vec<f64>> = effects.iter().map(|e| vec![1.0, regressor(e.se)]).collect();
    let y: Vec<f64> = effects.iter().map(|e| e.y).collect();
    let w: Vec<f64> = effects.iter().map(|e| 1.0 / (e.se * e.se)).collect();
    let fit = wls(&x, &y, &w)?;
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let [b0, b1] = [fit.coefficients[0], fit.coefficients[1]];
    let [s0, s1] = [fit.std_errors[0], fit.std_errors[1]];
    Ok(MetaRegression {
        intercept: b0,
        intercept_se: s0,
        intercept_p: coef_p(b0, s0, fit.df, scale),
        slope: b1,
        slope_se: s1,
        slope_p: coef_p(b1, s1, fit.df, scale),
        df: fit.df,
    })
}

pub fn pet(effects: &[TaskEffect]) -> Result<MetaRegression> {
    meta_regress(effects, |se| se)
}

pub fn peese(effects: &[TaskEffect]) -> Result<MetaRegression> {
    meta_regress(effects, |se| se * se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaMethod {
    #[serde(rename = "PET")]
    Pet,
    #[serde(rename = "PEESE")]
    Peese,
}

impl MetaMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaMethod::Pet => "PET",
            MetaMethod::Peese => "PEESE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub method: MetaMethod,
    /// Pooled effect at SE → 0.
    pub intercept: f64,
    pub ci95: (f64, f64),
    pub slope: f64,
    /// Two-sided p of the PET slope.
    pub egger_p: f64,
    pub k: usize,
}

pub fn pet_peese(effects: &[TaskEffect]) -> Result<MetaResult> {
    let p = pet(effects)?;
    // one-tailed in the direction of the estimate
    let switch = p.intercept != 0.0 && p.intercept_p / 2.0 < PET_ALPHA;
    let (method, chosen) = if switch {
        (MetaMethod::Peese, peese(effects)?)
    } else {
        (MetaMethod::Pet, p)
    };
    let half = t_critical(chosen.df as f64, 0.05) * chosen.intercept_se;
    Ok(MetaResult {
        method,
        intercept: chosen.intercept,
        ci95: (chosen.intercept - half, chosen.intercept + half),
        slope: chosen.slope,
        egger_p: p.slope_p,
        k: effects.len(),
    })
}

/// Default benchmark settings scored by accuracy.
pub fn default_audit_tasks() -> Vec<TaskSpec> {
    let keys = ["arc_challenge@25", "hellaswag@10", "mmlu@5", "truthfulqa@0", "winogrande@5", "gsm8k@5"];
    TaskSpec::reference_suite()
        .into_iter()
        .filter(|t| keys.contains(&t.key().as_str()))
        .collect()
}

/// (feature, level) rows of the default audit table.
pub fn default_audit_levels() -> Vec<(Categorical, &'static str)> {
    use Categorical::*;
    vec![
        (PositionalEmbeddings, "alibi"),
        (PositionalEmbeddings, "learned"),
        (PositionalEmbeddings, "rope"),
        (LayerNorm, "nonparametric"),
        (LayerNorm, "parametric"),
        (LayerNorm, "rmsnorm"),
        (AttentionVariant, "full"),
        (AttentionVariant, "gqa"),
        (AttentionVariant, "local_full"),
        (AttentionVariant, "mqa"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub feature: String,
    pub level: String,
    pub effects: Vec<TaskEffect>,
    /// Tasks left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub result: Option<MetaResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAudit {
    pub weights: WeightPolicy,
    pub rows: Vec<AuditRow>,
}

/// Run the audit for every (feature, level) over `tasks`. Tasks where a
/// contrast cannot be estimated are skipped; rows with fewer than the minimum
/// number of effects carry an error instead of a result.
pub fn bias_audit(
    registry: &Registry,
    scores: &[ScoreRecord],
    tasks: &[TaskSpec],
    levels: &[(Categorical, &str)],
    policy: WeightPolicy,
) -> Result<BiasAudit> {
    let datasets: Vec<(Dataset, Vec<f64>)> = tasks
        .iter()
        .map(|t| {
            let d = join_scores(registry, scores, t)?;
            let w = precision_weights(&d, policy);
            Ok((d, w))
        })
        .collect::<Result<_>>()?;
    let rows = levels
        .par_iter()
        .map(|&(feature, level)| {
            let mut effects = Vec::new();
            let mut skipped = Vec::new();
            for (d, w) in &datasets {
                match estimate_contrast(d, feature, level, w) {
                    Ok(e) => effects.push(e),
                    Err(e) => skipped.push((d.task.key(), e.to_string())),
                }
            }
            let (result, error) = match pet_peese(&effects) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            AuditRow {
                feature: feature.name().to_string(),
                level: level.to_string(),
                effects,
                skipped,
                result,
                error,
            }
        })
        .collect();
    Ok(BiasAudit { weights: policy, rows })
}

impl BiasAudit {
    /// Effects in percentage points.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Feature | Level | k | Chosen | Effect (pp) [95% CI] | Egger p |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for r in &self.rows {
            match &r.result {
                Some(m) => s.push_str(&format!(
                    "| {} | {} | {} | {} | {:+.1} [{:+.1}, {:+.1}] | {:.3} |\n",
                    r.feature,
                    r.level,
                    m.k,
                    m.method.as_str(),
                    100.0 * m.intercept,
                    100.0 * m.ci95.0,
                    100.0 * m.ci95.1,
                    m.egger_p
                )),
                None => s.push_str(&format!("| {} | {} | {} | - | - | - |\n", r.feature, r.level, r.effects.len())),
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,level,k,method,effect_pp,ci_low_pp,ci_high_pp,egger_p\n");
        for r in &self.rows {
            match &r.result {
                Some(m) => s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.feature,
                    r.level,
                    m.k,
                    m.method.as_str(),
                    100.0 * m.intercept,
                    100.0 * m.ci95.0,
                    100.0 * m.ci95.1,
                    m.egger_p
                )),
                None => s.push_str(&format!("{},{},{},,,,,\n", r.feature, r.level, r.effects.len())),
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(pairs: &[(f64, f64)]) -> Vec<TaskEffect> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, se))| TaskEffect { task_id: format!("t{i}"), y, se })
            .collect()
    }

    #[test]
    fn exact_lines() {
        let e = fx(&[0.01, 0.02, 0.04, 0.05].map(|se| (0.02 + 1.5 * se, se)));
        let p = pet(&e).unwrap();
        assert!((p.intercept - 0.02).abs() < 1e-9 && (p.slope - 1.5).abs() < 1e-9);
        let e = fx(&[0.01, 0.02, 0.04, 0.05].map(|se| (0.01 + 2.0 * se * se, se)));
        assert!((peese(&e).unwrap().intercept - 0.01).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pet(&fx(&[(0.1, 0.02); 4])).is_err());
        assert!(peese(&fx(&[(0.1, 0.02), (0.2, 0.03)])).is_err());
        let flat = pet(&fx(&[(0.1, 0.01), (0.1, 0.02), (0.1, 0.05)])).unwrap();
        assert!(flat.slope.abs() < 1e-12 && (flat.intercept - 0.1).abs() < 1e-12);
    }
}
