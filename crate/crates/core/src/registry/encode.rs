//! Encoding records into numeric feature matrices.

use serde::{Deserialize, Serialize};

use super::features::{FeatureKey, SourceGroup};
use super::model::ModelRecord;
use super::scores::Dataset;
use super::RegistryError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum Transform {
    Identity,
    Log10,
    OneHot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    /// Column label; one-hot columns are `feature=level`.
    pub name: String,
    /// The requested feature this column was derived from.
    pub feature: String,
    pub source_group: SourceGroup,
    pub transform: Transform,
}

/// Row-major numeric matrix. Missing cells hold `NaN` and are flagged in
/// `missing`; nothing is imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<Column>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl FeatureMatrix {
    /// Build from raw rows; `NaN` marks a missing cell.
    pub fn from_rows(row_ids: Vec<String>, columns: Vec<Column>, rows: &[Vec<f64>]) -> Self {
        assert_eq!(row_ids.len(), rows.len(), "one id per row");
        let p = columns.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for r in rows {
            assert_eq!(r.len(), p, "row width must match column count");
            values.extend_from_slice(r);
        }
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Self {
            row_ids,
            columns,
            values,
            missing,
        }
    }

    /// Plain identity-encoded columns named `x0, x1, ...`, for tests and
    /// synthetic problems that do not come from a registry.
    pub fn from_plain_rows(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let columns = (0..p)
            .map(|j| Column {
                name: format!("x{j}"),
                feature: format!("x{j}"),
                source_group: SourceGroup::A,
                transform: Transform::Identity,
            })
            .collect();
        let ids = (0..rows.len()).map(|i| format!("row{i}")).collect();
        Self::from_rows(ids, columns, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i * self.n_cols() + j]
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let p = self.n_cols();
        let mut values = Vec::with_capacity(indices.len() * p);
        let mut missing = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            values.extend_from_slice(self.row(i));
            missing.extend_from_slice(&self.missing[i * p..(i + 1) * p]);
        }
        FeatureMatrix {
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            values,
            missing,
        }
    }

    /// CSV with a `model_id` column followed by one column per feature;
    /// missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model_id".to_string()];
        header.extend(self.column_names());
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_ids[i].clone()];
            rec.extend(
                self.row(i)
                    .iter()
                    .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Columns produced for the requested features, in order. Column layout
/// depends only on the names and the vocabularies, never on the data.
pub fn plan_columns(feature_names: &[String]) -> Result<Vec<(FeatureKey, Column)>, RegistryError> {
    let mut out = Vec::new();
    for name in feature_names {
        let key = FeatureKey::parse(name).ok_or_else(|| RegistryError::UnknownFeature(name.clone()))?;
        match &key {
            FeatureKey::Categorical(c) => {
                for level in c.levels() {
                    out.push((
                        key.clone(),
                        Column {
                            name: format!("{}={level}", c.name()),
                            feature: c.name().to_string(),
                            source_group: SourceGroup::A,
                            transform: Transform::OneHot(level.to_string()),
                        },
                    ));
                }
            }
            FeatureKey::Numeric(f) => out.push((
                key.clone(),
                Column {
                    name: f.name().to_string(),
                    feature: f.name().to_string(),
                    source_group: f.group(),
                    transform: if f.is_log_scaled() { Transform::Log10 } else { Transform::Identity },
                },
            )),
            FeatureKey::Gen(n) => out.push((
                key.clone(),
                Column {
                    name: n.clone(),
                    feature: n.clone(),
                    source_group: SourceGroup::F,
                    transform: Transform::Identity,
                },
            )),
        }
    }
    Ok(out)
}

fn encode_cell(key: &FeatureKey, col: &Column, r: &ModelRecord) -> f64 {
    match (key, &col.transform) {
        (FeatureKey::Categorical(c), Transform::OneHot(level)) => match r.arch.level(*c) {
            Some(held) => f64::from(u8::from(held == level)),
            None => f64::NAN,
        },
        (FeatureKey::Numeric(f), t) => match (f.value(r), t) {
            (Some(v), Transform::Log10) => v.log10(),
            (Some(v), _) => v,
            (None, _) => f64::NAN,
        },
        (FeatureKey::Gen(n), _) => r.gen.get(n).copied().unwrap_or(f64::NAN),
        _ => unreachable!("column plan pairs keys with matching transforms"),
    }
}

pub fn encode_records<'a>(
    records: impl IntoIterator<Item = &'a ModelRecord>,
    feature_names: &[String],
) -> Result<FeatureMatrix, RegistryError> {
    let plan = plan_columns(feature_names)?;
    let records: Vec<&ModelRecord> = records.into_iter().collect();
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| plan.iter().map(|(k, c)| encode_cell(k, c, r)).collect())
        .collect();
    Ok(FeatureMatrix::from_rows(
        records.iter().map(|r| r.model_id.clone()).collect(),
        plan.into_iter().map(|(_, c)| c).collect(),
        &rows,
    ))
}

pub fn encode_features(dataset: &Dataset, feature_names: &[String]) -> Result<FeatureMatrix, RegistryError> {
    encode_records(dataset.rows.iter().map(|r| &r.record), feature_names)
}
