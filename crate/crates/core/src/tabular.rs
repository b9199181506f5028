//! Cohort data model: patient records with temporal-tagged clinical
//! variables, CSV/JSON ingestion and Table-style summaries.
//!
//! A cohort couples a list of [`PatientRecord`]s with a [`VariableSpec`]
//! schema. Every variable carries a mandatory temporal tag so downstream
//! stages can prove that only baseline information reached a model.

pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Column names that belong to the record itself, not to the schema.
pub const RESERVED_COLUMNS: [&str; 7] = [
    "id",
    "months_to_progression",
    "recurrence_event",
    "os_months",
    "os_event",
    "dfs_months",
    "dfs_event",
];

/// Tokens treated as a missing cell on CSV ingestion (case-insensitive).
fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

/// When a variable becomes known relative to surgery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalTag {
    Baseline,
    Postoperative,
    Outcome,
}

impl fmt::Display for TemporalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalTag::Baseline => write!(f, "baseline"),
            TemporalTag::Postoperative => write!(f, "postoperative"),
            TemporalTag::Outcome => write!(f, "outcome"),
        }
    }
}

/// Schema entry for one variable. The temporal tag is mandatory: schema
/// files without it fail to parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub temporal_tag: TemporalTag,
}

/// A single cell: numeric, categorical or missing.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }
}

/// One patient. `values` is aligned with the cohort schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub values: Vec<Value>,
    pub months_to_progression: Option<f64>,
    pub recurrence_event: u8,
    pub os_months: f64,
    pub os_event: u8,
    pub dfs_months: f64,
    pub dfs_event: u8,
}

impl PatientRecord {
    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if let Some(m) = self.months_to_progression {
            if !(m >= 0.0) {
                return Err(bad("months_to_progression must be >= 0"));
            }
        }
        if self.os_months < 0.0 || self.dfs_months < 0.0 {
            return Err(bad("survival months must be >= 0"));
        }
        for ev in [self.recurrence_event, self.os_event, self.dfs_event] {
            if ev > 1 {
                return Err(bad("event indicators must be 0 or 1"));
            }
        }
        if self.recurrence_event == 1 && self.months_to_progression.is_none() {
            return Err(Error::EventWithoutTime(self.id.clone()));
        }
        Ok(())
    }
}

/// Records plus schema. Immutable after construction; all accessors are
/// pure, so a cohort can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: Vec<VariableSpec>,
    records: Vec<PatientRecord>,
}

impl Cohort {
    /// Build a cohort, enforcing the record/schema invariants.
    pub fn new(schema: Vec<VariableSpec>, records: Vec<PatientRecord>) -> Result<Self> {
        let mut names = HashSet::new();
        for spec in &schema {
            if RESERVED_COLUMNS.contains(&spec.name.as_str()) {
                return Err(Error::ReservedName(spec.name.clone()));
            }
            if !names.insert(spec.name.clone()) {
                return Err(Error::DuplicateVariable(spec.name.clone()));
            }
        }
        let mut ids = HashSet::new();
        for rec in &records {
            if !ids.insert(rec.id.clone()) {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            if rec.values.len() != schema.len() {
                return Err(Error::InvalidRecord {
                    id: rec.id.clone(),
                    reason: format!(
                        "record has {} values but the schema has {} variables",
                        rec.values.len(),
                        schema.len()
                    ),
                });
            }
            rec.validate()?;
        }
        Ok(Cohort { schema, records })
    }

    pub fn schema(&self) -> &[VariableSpec] {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s.name == name)
    }

    /// Cell value by record index and variable name.
    pub fn value(&self, row: usize, name: &str) -> Option<&Value> {
        let col = self.column_index(name)?;
        Some(&self.records[row].values[col])
    }

    /// Fraction of missing cells in one column.
    pub fn missing_fraction(&self, col: usize) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let missing = self
            .records
            .iter()
            .filter(|r| r.values[col].is_missing())
            .count();
        missing as f64 / self.records.len() as f64
    }

    /// New cohort keeping only the named columns (order preserved).
    pub fn select_columns(&self, keep: &[usize]) -> Cohort {
        let schema = keep.iter().map(|&c| self.schema[c].clone()).collect();
        let records = self
            .records
            .iter()
            .map(|r| PatientRecord {
                values: keep.iter().map(|&c| r.values[c].clone()).collect(),
                ..r.clone()
            })
            .collect();
        Cohort { schema, records }
    }
}

/// Load a schema from its JSON representation:
/// an array of `{name, kind, temporal_tag}`.
pub fn load_schema_json(path: impl AsRef<Path>) -> Result<Vec<VariableSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Vec<VariableSpec> =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok(schema)
}

pub fn write_schema_json(schema: &[VariableSpec], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn parse_num(cell: &str) -> Value {
    match cell.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Value::Num(x),
        _ => Value::Missing,
    }
}

fn parse_event(cell: &str, id: &str, what: &str) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::InvalidRecord {
            id: id.to_string(),
            reason: format!("{what} must be 0 or 1, got `{other}`"),
        }),
    }
}

/// Read a cohort from CSV plus its schema JSON.
///
/// The CSV must contain `id`, one column per schema variable and the six
/// reserved outcome columns. Unparseable cells in continuous columns become
/// missing values; empty and `NA` cells are missing in any column.
pub fn load_cohort_csv(
    path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<Cohort> {
    let schema = load_schema_json(schema_path)?;
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();

    for h in &headers {
        if !RESERVED_COLUMNS.contains(&h.as_str()) && !schema.iter().any(|s| &s.name == h) {
            return Err(Error::UnknownColumn(h.clone()));
        }
    }
    for reserved in RESERVED_COLUMNS {
        if !headers.iter().any(|h| h == reserved) {
            return Err(Error::MissingColumn(reserved.to_string()));
        }
    }
    let mut col_of = Vec::with_capacity(schema.len());
    for spec in &schema {
        let idx = headers
            .iter()
            .position(|h| h == &spec.name)
            .ok_or_else(|| Error::MissingColumn(spec.name.clone()))?;
        col_of.push(idx);
    }
    let reserved_idx: Vec<usize> = RESERVED_COLUMNS
        .iter()
        .map(|r| headers.iter().position(|h| h == r).unwrap())
        .collect();

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let id = get(reserved_idx[0]).to_string();

        let values = schema
            .iter()
            .zip(&col_of)
            .map(|(spec, &i)| {
                let cell = get(i);
                if is_missing_token(cell) {
                    Value::Missing
                } else {
                    match spec.kind {
                        VariableKind::Continuous => parse_num(cell),
                        VariableKind::Categorical => Value::Cat(cell.to_string()),
                    }
                }
            })
            .collect();

        let months_cell = get(reserved_idx[1]);
        let months_to_progression = if is_missing_token(months_cell) {
            None
        } else {
            parse_num(months_cell).as_num()
        };
        let record = PatientRecord {
            id: id.clone(),
            values,
            months_to_progression,
            recurrence_event: parse_event(get(reserved_idx[2]), &id, "recurrence_event")?,
            os_months: parse_num(get(reserved_idx[3])).as_num().ok_or_else(|| {
                Error::InvalidRecord {
                    id: id.clone(),
                    reason: "os_months is not numeric".into(),
                }
            })?,
            os_event: parse_event(get(reserved_idx[4]), &id, "os_event")?,
            dfs_months: parse_num(get(reserved_idx[5])).as_num().ok_or_else(|| {
                Error::InvalidRecord {
                    id: id.clone(),
                    reason: "dfs_months is not numeric".into(),
                }
            })?,
            dfs_event: parse_event(get(reserved_idx[6]), &id, "dfs_event")?,
        };
        records.push(record);
    }
    Cohort::new(schema, records)
}

/// Serialize a cohort to CSV. Numbers use the shortest representation that
/// round-trips exactly, so `write` then `load` is the identity.
pub fn write_cohort_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = vec!["id"];
    header.extend(cohort.schema.iter().map(|s| s.name.as_str()));
    header.extend(&RESERVED_COLUMNS[1..]);
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;

    for rec in &cohort.records {
        let mut row: Vec<String> = vec![rec.id.clone()];
        for v in &rec.values {
            row.push(match v {
                Value::Num(x) => format!("{x}"),
                Value::Cat(s) => s.clone(),
                Value::Missing => String::new(),
            });
        }
        row.push(
            rec.months_to_progression
                .map(|m| format!("{m}"))
                .unwrap_or_default(),
        );
        row.push(rec.recurrence_event.to_string());
        row.push(format!("{}", rec.os_months));
        row.push(rec.os_event.to_string());
        row.push(format!("{}", rec.dfs_months));
        row.push(rec.dfs_event.to_string());
        writer.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Per-variable descriptive statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub name: String,
    pub temporal_tag: TemporalTag,
    pub missing_fraction: f64,
    pub stat: SummaryStat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    /// mean and sample SD (n-1) over observed values
    Continuous { mean: f64, sd: f64 },
    /// level -> (count, percent of observed)
    Categorical { levels: Vec<(String, usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub n: usize,
    pub variables: Vec<VariableSummary>,
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cohort summary (n = {})", self.n)?;
        writeln!(f, "{:<38} {:>8}  value", "variable", "missing")?;
        for v in &self.variables {
            match &v.stat {
                SummaryStat::Continuous { mean, sd } => writeln!(
                    f,
                    "{:<38} {:>7.1}%  {:.1} ± {:.1}",
                    v.name,
                    100.0 * v.missing_fraction,
                    mean,
                    sd
                )?,
                SummaryStat::Categorical { levels } => {
                    let txt = levels
                        .iter()
                        .map(|(l, c, p)| format!("{l} {c} ({p:.1}%)"))
                        .collect::<Vec<_>>()
                        .join(", ");
                    writeln!(f, "{:<38} {:>7.1}%  {}", v.name, 100.0 * v.missing_fraction, txt)?
                }
            }
        }
        Ok(())
    }
}

/// Mean ± SD for continuous variables, count (%) per level for categorical
/// ones, plus the missing fraction for every column.
pub fn summarize_cohort(cohort: &Cohort) -> Result<CohortSummary> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let variables = cohort
        .schema
        .iter()
        .enumerate()
        .map(|(col, spec)| {
            let missing_fraction = cohort.missing_fraction(col);
            let stat = match spec.kind {
                VariableKind::Continuous => {
                    let observed: Vec<f64> = cohort
                        .records
                        .iter()
                        .filter_map(|r| r.values[col].as_num())
                        .collect();
                    SummaryStat::Continuous {
                        mean: math::mean(&observed),
                        sd: math::sample_sd(&observed),
                    }
                }
                VariableKind::Categorical => {
                    let mut counts: Vec<(String, usize)> = Vec::new();
                    let mut observed = 0usize;
                    for rec in &cohort.records {
                        if let Some(cat) = rec.values[col].as_cat() {
                            observed += 1;
                            match counts.iter_mut().find(|(l, _)| l == cat) {
                                Some((_, c)) => *c += 1,
                                None => counts.push((cat.to_string(), 1)),
                            }
                        }
                    }
                    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    let levels = counts
                        .into_iter()
                        .map(|(l, c)| {
                            let pct = if observed == 0 {
                                0.0
                            } else {
                                100.0 * c as f64 / observed as f64
                            };
                            (l, c, pct)
                        })
                        .collect();
                    SummaryStat::Categorical { levels }
                }
            };
            VariableSummary {
                name: spec.name.clone(),
                temporal_tag: spec.temporal_tag,
                missing_fraction,
                stat,
            }
        })
        .collect();
    Ok(CohortSummary {
        n: cohort.len(),
        variables,
    })
}
