//! Loading and validating the model registry.
//!
//! Both input formats are lowered to the canonical JSON shape first and then
//! run through one validator, so the CSV path cannot drift from the JSON
//! rules. Validation collects every violation instead of stopping at the
//! first one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::features::NumericField;
use super::model::{gen_feature_kind, GenKind, ModelRecord};
use super::vocab::Categorical;
use super::RegistryError;

/// Tolerance on the sum of domain percentages (rounding in source documents).
pub const DOMAIN_SUM_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending model, or `None` for file-level problems.
    pub model_id: Option<String>,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(model_id: Option<&str>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            model_id: model_id.map(str::to_string),
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.model_id {
            Some(id) => write!(f, "model {id:?}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// An immutable, validated set of model records.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    records: Vec<ModelRecord>,
    index: HashMap<String, usize>,
}

/// Input format for [`Registry::load`].
#[derive(Debug, Clone)]
pub enum RegistryFormat {
    CanonicalJson,
    CsvWithMapping(CsvMapping),
}

impl Registry {
    pub fn load(path: impl AsRef<Path>, format: &RegistryFormat) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        match format {
            RegistryFormat::CanonicalJson => Self::from_json_str(&text),
            RegistryFormat::CsvWithMapping(m) => Self::from_csv_str(&text, m),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, RegistryError> {
        if text.trim().is_empty() {
            return Err(RegistryError::NoRecords);
        }
        let value: Value =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_csv_str(text: &str, mapping: &CsvMapping) -> Result<Self, RegistryError> {
        Self::from_value(mapping.to_canonical(text)?)
    }

    /// Validate already-typed records (e.g. from the synthetic generator).
    pub fn from_records(records: Vec<ModelRecord>) -> Result<Self, RegistryError> {
        let value = serde_json::to_value(&records).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self, RegistryError> {
        let items = match value {
            Value::Array(items) => items,
            _ => return Err(RegistryError::Parse("top level must be a JSON array of models".into())),
        };
        if items.is_empty() {
            return Err(RegistryError::NoRecords);
        }
        let mut violations = Vec::new();
        let mut records = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if let Some(r) = validate_record(i, item, &mut violations) {
                records.push(r);
            }
        }
        let mut index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.model_id.clone(), i).is_some() {
                violations.push(Violation::new(Some(&r.model_id), "model_id", "duplicate model_id"));
            }
        }
        if !violations.is_empty() {
            return Err(RegistryError::Invalid(violations));
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[ModelRecord] {
        &self.records
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelRecord> {
        self.index.get(model_id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records always serialize")
    }
}

fn validate_record(i: usize, item: &Value, out: &mut Vec<Violation>) -> Option<ModelRecord> {
    let before = out.len();
    let Some(obj) = item.as_object() else {
        out.push(Violation::new(None, format!("[{i}]"), "record must be a JSON object"));
        return None;
    };
    let id = match obj.get("model_id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        _ => {
            out.push(Violation::new(None, format!("[{i}].model_id"), "missing or empty model_id"));
            format!("#{i}")
        }
    };
    let idr = Some(id.as_str());

    for key in obj.keys() {
        if !["model_id", "organization", "arch", "data", "gen", "provenance"].contains(&key.as_str()) {
            out.push(Violation::new(idr, key.as_str(), "unknown top-level field"));
        }
    }
    for key in ["organization", "provenance"] {
        if let Some(v) = obj.get(key) {
            if !v.is_string() && !v.is_null() {
                out.push(Violation::new(idr, key, "must be a string"));
            }
        }
    }

    let empty = Map::new();
    let arch = section(obj, "arch", idr, out).unwrap_or(&empty);
    let data = section(obj, "data", idr, out).unwrap_or(&empty);

    check_section_keys(arch, "arch", &NumericField::ARCH, true, idr, out);
    check_section_keys(data, "data", &NumericField::DATA, false, idr, out);
    for f in NumericField::ARCH.into_iter().chain(NumericField::DATA) {
        let (sect, prefix) = match f.group() {
            super::SourceGroup::A => (arch, "arch"),
            _ => (data, "data"),
        };
        check_numeric(f, sect.get(f.name()), &format!("{prefix}.{}", f.name()), idr, out);
    }
    for c in Categorical::ALL {
        match arch.get(c.name()) {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => {
                if let Err(e) = c.parse_level(s) {
                    out.push(Violation::new(idr, format!("arch.{}", c.name()), e));
                }
            }
            Some(Value::Array(_)) => out.push(Violation::new(
                idr,
                format!("arch.{}", c.name()),
                "multi-valued documentation is not accepted; resolve to a single level",
            )),
            Some(_) => out.push(Violation::new(idr, format!("arch.{}", c.name()), "must be a string level")),
        }
    }

    let shares: Vec<f64> = [
        NumericField::PctWeb,
        NumericField::PctCode,
        NumericField::PctBooks,
        NumericField::PctReference,
        NumericField::PctAcademic,
    ]
    .iter()
    .filter_map(|f| data.get(f.name()).and_then(Value::as_f64))
    .collect();
    let total: f64 = shares.iter().sum();
    if total > 100.0 + DOMAIN_SUM_TOLERANCE {
        out.push(Violation::new(
            idr,
            "data",
            format!("domain percentages sum to {total}, above 100 + {DOMAIN_SUM_TOLERANCE}"),
        ));
    }

    if let Some(gen) = obj.get("gen") {
        match gen {
            Value::Null => {}
            Value::Object(m) => {
                for (name, v) in m {
                    check_gen(name, v, idr, out);
                }
            }
            _ => out.push(Violation::new(idr, "gen", "must be an object")),
        }
    }

    if out.len() > before {
        return None;
    }
    // Structure is validated; drop explicit nulls so serde sees absent fields.
    let cleaned = strip_nulls(item.clone());
    match serde_json::from_value::<ModelRecord>(cleaned) {
        Ok(r) => Some(r),
        Err(e) => {
            out.push(Violation::new(idr, "record", e.to_string()));
            None
        }
    }
}

fn section<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    id: Option<&str>,
    out: &mut Vec<Violation>,
) -> Option<&'a Map<String, Value>> {
    match obj.get(key) {
        Some(Value::Object(m)) => Some(m),
        Some(_) => {
            out.push(Violation::new(id, key, "must be an object"));
            None
        }
        None => {
            out.push(Violation::new(id, key, "missing section"));
            None
        }
    }
}

fn check_section_keys(
    sect: &Map<String, Value>,
    name: &str,
    numeric: &[NumericField],
    with_categorical: bool,
    id: Option<&str>,
    out: &mut Vec<Violation>,
) {
    for key in sect.keys() {
        let known = numeric.iter().any(|f| f.name() == key)
            || (with_categorical && Categorical::from_name(key).is_some());
        if !known {
            out.push(Violation::new(id, format!("{name}.{key}"), "unknown field"));
        }
    }
}

fn check_numeric(f: NumericField, v: Option<&Value>, path: &str, id: Option<&str>, out: &mut Vec<Violation>) {
    let required = matches!(f, NumericField::TotalParams | NumericField::TotalTokensBillions);
    let x = match v {
        None | Some(Value::Null) => {
            if required {
                out.push(Violation::new(id, path, "missing; required for inclusion"));
            }
            return;
        }
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        Some(Value::Array(_)) => {
            out.push(Violation::new(id, path, "multi-valued documentation is not accepted; resolve to a single value"));
            return;
        }
        Some(other) => {
            out.push(Violation::new(id, path, format!("expected a single number, got {other}")));
            return;
        }
    };
    if !x.is_finite() {
        out.push(Violation::new(id, path, "not a finite number"));
    } else if f.is_percent() {
        if !(0.0..=100.0).contains(&x) {
            out.push(Violation::new(id, path, format!("percentage {x} outside [0, 100]")));
        }
    } else if x <= 0.0 {
        out.push(Violation::new(id, path, format!("must be > 0, got {x}")));
    } else if f.is_count() && x.fract() != 0.0 {
        out.push(Violation::new(id, path, format!("count must be a whole number, got {x}")));
    }
}

fn check_gen(name: &str, v: &Value, id: Option<&str>, out: &mut Vec<Violation>) {
    let path = format!("gen.{name}");
    let Some(kind) = gen_feature_kind(name) else {
        out.push(Violation::new(id, path, "unknown generation feature name"));
        return;
    };
    let x = match v {
        Value::Null => return,
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        _ => {
            out.push(Violation::new(id, path, "expected a single number"));
            return;
        }
    };
    let ok = x.is_finite()
        && match kind {
            GenKind::Percent => (0.0..=100.0).contains(&x),
            GenKind::Per100k | GenKind::NonNegative => x >= 0.0,
            GenKind::Real => true,
        };
    if !ok {
        out.push(Violation::new(id, path, format!("value {x} violates {kind:?} constraint")));
    }
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

/// Column mapping for importing a registry from an arbitrary CSV export.
///
/// `columns` maps external column names to canonical names (`model_id`,
/// `organization`, `provenance`, any arch/data field, or a documented
/// generation feature). `scale` multiplies numeric columns after parsing
/// (e.g. parameters recorded in billions). `values` rewrites categorical
/// spellings, e.g. `{"attention_variant": {"local,full": "local_full"}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
    #[serde(default)]
    pub values: BTreeMap<String, BTreeMap<String, String>>,
}

const MISSING_TOKENS: &[&str] = &["", "na", "nan", "null", "none", "n/a", "-"];

impl CsvMapping {
    pub fn from_json_str(text: &str) -> Result<Self, RegistryError> {
        let m: Self = serde_json::from_str(text).map_err(|e| RegistryError::Mapping(e.to_string()))?;
        for canonical in m.columns.values() {
            let known = ["model_id", "organization", "provenance"].contains(&canonical.as_str())
                || NumericField::from_name(canonical).is_some()
                || Categorical::from_name(canonical).is_some()
                || gen_feature_kind(canonical).is_some();
            if !known {
                return Err(RegistryError::Mapping(format!("unknown canonical name {canonical:?}")));
            }
        }
        Ok(m)
    }

    /// Lower CSV rows into the canonical JSON array.
    pub fn to_canonical(&self, text: &str) -> Result<Value, RegistryError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| RegistryError::Parse(e.to_string()))?.clone();
        let mut out = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| RegistryError::Parse(e.to_string()))?;
            let mut top = Map::new();
            let mut arch = Map::new();
            let mut data = Map::new();
            let mut gen = Map::new();
            for (header, cell) in headers.iter().zip(row.iter()) {
                let Some(canonical) = self.columns.get(header) else { continue };
                if MISSING_TOKENS.contains(&cell.to_ascii_lowercase().as_str()) {
                    continue;
                }
                let canonical = canonical.as_str();
                if ["model_id", "organization", "provenance"].contains(&canonical) {
                    top.insert(canonical.into(), Value::String(cell.into()));
                } else if let Some(c) = Categorical::from_name(canonical) {
                    let level = self
                        .values
                        .get(c.name())
                        .and_then(|m| m.get(cell))
                        .cloned()
                        .unwrap_or_else(|| cell.to_string());
                    arch.insert(canonical.into(), Value::String(level));
                } else {
                    let v = self.numeric_cell(canonical, cell);
                    match NumericField::from_name(canonical) {
                        Some(f) if f.group() == super::SourceGroup::A => arch.insert(canonical.into(), v),
                        Some(_) => data.insert(canonical.into(), v),
                        None => gen.insert(canonical.into(), v),
                    };
                }
            }
            top.insert("arch".into(), Value::Object(arch));
            top.insert("data".into(), Value::Object(data));
            top.insert("gen".into(), Value::Object(gen));
            out.push(Value::Object(top));
        }
        Ok(Value::Array(out))
    }

    fn numeric_cell(&self, canonical: &str, cell: &str) -> Value {
        match cell.parse::<f64>() {
            Ok(x) => {
                let x = x * self.scale.get(canonical).copied().unwrap_or(1.0);
                // Counts must stay integral in JSON so typed decoding accepts them.
                let is_count = NumericField::from_name(canonical).is_some_and(NumericField::is_count);
                if is_count && x.fract() == 0.0 && x >= 0.0 && x < 9.0e15 {
                    Value::from(x as u64)
                } else {
                    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
                }
            }
            // Unparseable (e.g. "300-500"): keep the text so the validator names it.
            Err(_) => Value::String(cell.into()),
        }
    }
}
