//! Benchmark tasks, score records, and per-task datasets.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::load::Registry;
use super::model::ModelRecord;
use super::RegistryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Brier,
    /// Grouped with accuracy; no separate estimator.
    PassAt1,
}

impl MetricKind {
    pub fn polarity(self) -> Polarity {
        match self {
            MetricKind::Brier => Polarity::LowerBetter,
            MetricKind::Accuracy | MetricKind::PassAt1 => Polarity::HigherBetter,
        }
    }

    /// Admissible score range.
    pub fn range(self) -> (f64, f64) {
        match self {
            MetricKind::Brier => (0.0, 2.0),
            MetricKind::Accuracy | MetricKind::PassAt1 => (0.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Brier => "brier",
            MetricKind::PassAt1 => "pass_at_1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accuracy" => Some(MetricKind::Accuracy),
            "brier" => Some(MetricKind::Brier),
            "pass_at_1" => Some(MetricKind::PassAt1),
            _ => None,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub shots: u32,
    pub metric_kind: MetricKind,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_items: Option<u64>,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, shots: u32, metric_kind: MetricKind) -> Self {
        Self {
            task_id: task_id.into(),
            shots,
            metric_kind,
            polarity: metric_kind.polarity(),
            n_items: None,
        }
    }

    pub fn with_items(mut self, n: u64) -> Self {
        self.n_items = Some(n);
        self
    }

    /// Checks the metric/polarity pairing (relevant for deserialized specs).
    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.polarity != self.metric_kind.polarity() {
            return Err(RegistryError::Task(format!(
                "task {}: metric {} requires polarity {:?}",
                self.task_id,
                self.metric_kind,
                self.metric_kind.polarity()
            )));
        }
        Ok(())
    }

    /// `task_id@shots`, unique across settings of the same benchmark.
    pub fn key(&self) -> String {
        format!("{}@{}", self.task_id, self.shots)
    }

    /// Settings evaluated in the reference study, with approximate benchmark
    /// sizes (used only for precision weights).
    pub fn reference_suite() -> Vec<TaskSpec> {
        use MetricKind::*;
        [
            ("arc_challenge", 25, Accuracy, 2_600),
            ("gsm8k", 5, Accuracy, 8_000),
            ("hellaswag", 10, Accuracy, 70_000),
            ("humaneval", 0, PassAt1, 164),
            ("lambada", 0, Accuracy, 10_000),
            ("mmlu", 0, Accuracy, 2_850),
            ("mmlu", 5, Accuracy, 2_850),
            ("truthfulqa", 0, Accuracy, 817),
            ("winogrande", 5, Accuracy, 44_000),
            ("xnli", 0, Brier, 2_500),
            ("anli", 0, Brier, 163_000),
            ("mathqa", 0, Brier, 37_000),
            ("logiqa2", 0, Brier, 8_000),
        ]
        .into_iter()
        .map(|(id, shots, kind, n)| TaskSpec::new(id, shots, kind).with_items(n))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model_id: String,
    pub task_id: String,
    pub shots: u32,
    pub metric_kind: MetricKind,
    pub value: f64,
}

pub const SCORES_HEADER: [&str; 5] = ["model_id", "task_id", "shots", "metric_kind", "value"];

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>, RegistryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scores(&text)
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>, RegistryError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| RegistryError::Parse(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SCORES_HEADER {
        return Err(RegistryError::Parse(format!(
            "scores header must be `{}`",
            SCORES_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| RegistryError::Parse(e.to_string()))?;
        let bad = |what: &str| RegistryError::Parse(format!("scores row {}: bad {what}", line + 2));
        out.push(ScoreRecord {
            model_id: row[0].to_string(),
            task_id: row[1].to_string(),
            shots: row[2].parse().map_err(|_| bad("shots"))?,
            metric_kind: MetricKind::parse(&row[3]).ok_or_else(|| bad("metric_kind"))?,
            value: row[4].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}

pub fn write_scores(scores: &[ScoreRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_HEADER).expect("in-memory write");
    for s in scores {
        w.write_record([
            s.model_id.as_str(),
            s.task_id.as_str(),
            &s.shots.to_string(),
            s.metric_kind.as_str(),
            &s.value.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Every problem in a score list (orphans, range, metric mismatch,
/// duplicates), used by validation reporting.
pub fn score_violations(registry: &Registry, scores: &[ScoreRecord]) -> Vec<super::Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for s in scores {
        let v = |field: &str, msg: String| super::Violation {
            model_id: Some(s.model_id.clone()),
            field: format!("scores[{}@{}].{field}", s.task_id, s.shots),
            message: msg,
        };
        if registry.get(&s.model_id).is_none() {
            out.push(v("model_id", "model not in registry".into()));
        }
        let (lo, hi) = s.metric_kind.range();
        if !(lo..=hi).contains(&s.value) || !s.value.is_finite() {
            out.push(v("value", format!("{} score {} outside [{lo}, {hi}]", s.metric_kind, s.value)));
        }
        if !seen.insert((s.model_id.as_str(), s.task_id.as_str(), s.shots)) {
            out.push(v("model_id", "duplicate score for this task setting".into()));
        }
    }
    out
}

/// One task's (model, score) pairs, in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskSpec,
    pub rows: Vec<DatasetRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub record: ModelRecord,
    pub value: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.record.model_id.as_str()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            task: self.task.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Restrict `scores` to `task` and pair them with registry records. Models
/// without a score for the task are left out.
pub fn join_scores(registry: &Registry, scores: &[ScoreRecord], task: &TaskSpec) -> Result<Dataset, RegistryError> {
    task.validate()?;
    let mut by_model = std::collections::HashMap::new();
    for s in scores.iter().filter(|s| s.task_id == task.task_id && s.shots == task.shots) {
        if registry.get(&s.model_id).is_none() {
            return Err(RegistryError::OrphanScore {
                model_id: s.model_id.clone(),
                task: task.key(),
            });
        }
        if s.metric_kind != task.metric_kind {
            return Err(RegistryError::Task(format!(
                "score for {} on {} has metric {}, task expects {}",
                s.model_id,
                task.key(),
                s.metric_kind,
                task.metric_kind
            )));
        }
        let (lo, hi) = task.metric_kind.range();
        if !(lo..=hi).contains(&s.value) || !s.value.is_finite() {
            return Err(RegistryError::ScoreRange {
                model_id: s.model_id.clone(),
                task: task.key(),
                value: s.value,
            });
        }
        if by_model.insert(s.model_id.as_str(), s.value).is_some() {
            return Err(RegistryError::Task(format!("duplicate score for {} on {}", s.model_id, task.key())));
        }
    }
    let rows = registry
        .records()
        .iter()
        .filter_map(|r| {
            by_model.get(r.model_id.as_str()).map(|&value| DatasetRow {
                record: r.clone(),
                value,
            })
        })
        .collect();
    Ok(Dataset { task: task.clone(), rows })
}
