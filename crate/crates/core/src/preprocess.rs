//! Deterministic preprocessing: missingness filtering, imputation,
//! z-normalization, one-hot encoding, metabolic scoring, horizon labels,
//! stratified splitting and minority oversampling.
//!
//! Fitting statistics are always computed on an explicit row subset through
//! the [`FrameSource`] trait, so an access-tracking wrapper can certify that
//! no test row was read while a pipeline was fitted.

use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tabular::{Cohort, TemporalTag, Value, VariableKind};

/// Where a feature column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Clinical,
    Radiomic,
    Derived,
}

/// Metadata for one raw (pre-encoding) column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: VariableKind,
    pub temporal_tag: TemporalTag,
    pub provenance: Provenance,
}

/// Read-only access to a rectangular table of mixed cells. Implementations
/// must be thread-safe; every pipeline fit reads cells exclusively through
/// this trait.
pub trait FrameSource: Sync {
    fn n_rows(&self) -> usize;
    fn columns(&self) -> &[ColumnMeta];
    fn value(&self, row: usize, col: usize) -> Value;
}

/// Materialized mixed-type table, the input to pipeline fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    columns: Vec<ColumnMeta>,
    rows: Vec<Vec<Value>>,
}

impl FeatureFrame {
    pub fn new(columns: Vec<ColumnMeta>, rows: Vec<Vec<Value>>) -> Result<Self> {
        for row in &rows {
            if row.len() != columns.len() {
                return Err(Error::LengthMismatch(row.len(), columns.len()));
            }
        }
        Ok(FeatureFrame { columns, rows })
    }

    /// Build a frame from the cohort's schema columns. Provenance is
    /// inferred from the name: `radiomic_*` columns are radiomic,
    /// `*_interaction` columns are derived, everything else clinical.
    pub fn from_cohort(cohort: &Cohort) -> Self {
        let columns = cohort
            .schema()
            .iter()
            .map(|s| ColumnMeta {
                name: s.name.clone(),
                kind: s.kind,
                temporal_tag: s.temporal_tag,
                provenance: if s.name.starts_with("radiomic_") {
                    Provenance::Radiomic
                } else if s.name.ends_with("_interaction") {
                    Provenance::Derived
                } else {
                    Provenance::Clinical
                },
            })
            .collect();
        let rows = cohort
            .records()
            .iter()
            .map(|r| r.values.clone())
            .collect();
        FeatureFrame { columns, rows }
    }

    /// Append a column (used to merge externally extracted features).
    pub fn push_column(&mut self, meta: ColumnMeta, values: Vec<Value>) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(Error::LengthMismatch(values.len(), self.rows.len()));
        }
        self.columns.push(meta);
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
        Ok(())
    }

    /// Keep only columns selected by the predicate.
    pub fn retain_columns(&self, keep: impl Fn(&ColumnMeta) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.columns.len())
            .filter(|&c| keep(&self.columns[c]))
            .collect();
        FeatureFrame {
            columns: idx.iter().map(|&c| self.columns[c].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&c| r[c].clone()).collect())
                .collect(),
        }
    }
}

impl FrameSource for FeatureFrame {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    fn value(&self, row: usize, col: usize) -> Value {
        self.rows[row][col].clone()
    }
}

/// Wrapper that records which rows were read. Used by the hygiene harness
/// to certify that pipeline fits never touch held-out rows.
pub struct TrackedFrame<'a> {
    inner: &'a FeatureFrame,
    touched: Mutex<BTreeSet<usize>>,
}

impl<'a> TrackedFrame<'a> {
    pub fn new(inner: &'a FeatureFrame) -> Self {
        TrackedFrame {
            inner,
            touched: Mutex::new(BTreeSet::new()),
        }
    }

    /// Rows read since construction or the last [`TrackedFrame::clear`].
    pub fn touched(&self) -> BTreeSet<usize> {
        self.touched.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.touched.lock().unwrap().clear();
    }
}

impl FrameSource for TrackedFrame<'_> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn columns(&self) -> &[ColumnMeta] {
        self.inner.columns()
    }

    fn value(&self, row: usize, col: usize) -> Value {
        self.touched.lock().unwrap().insert(row);
        self.inner.value(row, col)
    }
}

/// Report of the missingness filter.
#[derive(Debug, Clone, Serialize)]
pub struct MissingnessReport {
    pub threshold: f64,
    /// (column, missing fraction) pairs that were removed
    pub removed: Vec<(String, f64)>,
    pub retained: Vec<(String, f64)>,
}

/// Remove cohort columns whose missing fraction strictly exceeds
/// `threshold` ("more than" is read strictly: a column at exactly the
/// threshold is retained).
pub fn drop_high_missingness(
    cohort: &Cohort,
    threshold: f64,
) -> Result<(Cohort, MissingnessReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "missingness threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    let mut retained = Vec::new();
    for (col, spec) in cohort.schema().iter().enumerate() {
        let frac = cohort.missing_fraction(col);
        if frac > threshold {
            removed.push((spec.name.clone(), frac));
        } else {
            keep.push(col);
            retained.push((spec.name.clone(), frac));
        }
    }
    if keep.is_empty() && !cohort.schema().is_empty() {
        return Err(Error::AllColumnsRemoved);
    }
    Ok((
        cohort.select_columns(&keep),
        MissingnessReport {
            threshold,
            removed,
            retained,
        },
    ))
}

/// Per-column fitted state: imputation value plus normalization statistics
/// or the one-hot vocabulary. Serializable for exact replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FittedColumn {
    Continuous {
        meta: ColumnMeta,
        impute_value: f64,
        mean: f64,
        sd: f64,
        /// zero variance on the fit rows; transformed to all zeros
        constant: bool,
    },
    Categorical {
        meta: ColumnMeta,
        impute_mode: String,
        /// levels observed on the fit rows, lexicographic order
        levels: Vec<String>,
    },
}

impl FittedColumn {
    fn meta(&self) -> &ColumnMeta {
        match self {
            FittedColumn::Continuous { meta, .. } => meta,
            FittedColumn::Categorical { meta, .. } => meta,
        }
    }
}

/// Immutable fitted pipeline: impute with medians/modes, z-score with
/// population statistics, one-hot encode with the fit-time vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub columns: Vec<FittedColumn>,
}

impl FittedPipeline {
    /// Fit on exactly the rows in `fit_rows`; no other row is read.
    pub fn fit(frame: &dyn FrameSource, fit_rows: &[usize]) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let metas = frame.columns().to_vec();
        let mut columns = Vec::with_capacity(metas.len());
        for (c, meta) in metas.iter().enumerate() {
            match meta.kind {
                VariableKind::Continuous => {
                    let mut observed = Vec::with_capacity(fit_rows.len());
                    for &r in fit_rows {
                        match frame.value(r, c) {
                            Value::Num(x) if x.is_finite() => observed.push(x),
                            Value::Num(_) => return Err(Error::NonFiniteValue(meta.name.clone())),
                            Value::Missing => {}
                            Value::Cat(_) => {
                                return Err(Error::Invalid(format!(
                                    "categorical cell in continuous column `{}`",
                                    meta.name
                                )))
                            }
                        }
                    }
                    if observed.is_empty() {
                        return Err(Error::AllMissingColumn(meta.name.clone()));
                    }
                    let impute_value = math::median(&observed);
                    // normalization statistics are computed post-imputation
                    let mut filled = Vec::with_capacity(fit_rows.len());
                    for &r in fit_rows {
                        filled.push(frame.value(r, c).as_num().unwrap_or(impute_value));
                    }
                    let mean = math::mean(&filled);
                    let sd = math::population_sd(&filled);
                    columns.push(FittedColumn::Continuous {
                        meta: meta.clone(),
                        impute_value,
                        mean,
                        sd,
                        constant: sd == 0.0,
                    });
                }
                VariableKind::Categorical => {
                    let mut counts: Vec<(String, usize)> = Vec::new();
                    for &r in fit_rows {
                        match frame.value(r, c) {
                            Value::Cat(s) => match counts.iter_mut().find(|(l, _)| *l == s) {
                                Some((_, n)) => *n += 1,
                                None => counts.push((s, 1)),
                            },
                            Value::Missing => {}
                            Value::Num(_) => {
                                return Err(Error::Invalid(format!(
                                    "numeric cell in categorical column `{}`",
                                    meta.name
                                )))
                            }
                        }
                    }
                    if counts.is_empty() {
                        return Err(Error::AllMissingColumn(meta.name.clone()));
                    }
                    // mode; ties break to the lexicographically smallest level
                    let impute_mode = counts
                        .iter()
                        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                        .unwrap()
                        .0
                        .clone();
                    let mut levels: Vec<String> = counts.into_iter().map(|(l, _)| l).collect();
                    levels.sort();
                    columns.push(FittedColumn::Categorical {
                        meta: meta.clone(),
                        impute_mode,
                        levels,
                    });
                }
            }
        }
        Ok(FittedPipeline { columns })
    }

    /// Apply the fitted pipeline to `rows`, producing a fully numeric
    /// matrix. Levels unseen at fit time map to all-zero indicators.
    pub fn transform(&self, frame: &dyn FrameSource, rows: &[usize]) -> Result<FeatureMatrix> {
        if frame.columns().len() != self.columns.len() {
            return Err(Error::LengthMismatch(
                frame.columns().len(),
                self.columns.len(),
            ));
        }
        let mut out_columns = Vec::new();
        for fitted in &self.columns {
            match fitted {
                FittedColumn::Continuous { meta, constant, .. } => {
                    out_columns.push(MatrixColumn {
                        name: meta.name.clone(),
                        source: meta.name.clone(),
                        temporal_tag: meta.temporal_tag,
                        provenance: meta.provenance,
                        constant: *constant,
                    });
                }
                FittedColumn::Categorical { meta, levels, .. } => {
                    for level in levels {
                        out_columns.push(MatrixColumn {
                            name: format!("{}={}", meta.name, level),
                            source: meta.name.clone(),
                            temporal_tag: meta.temporal_tag,
                            provenance: meta.provenance,
                            constant: false,
                        });
                    }
                }
            }
        }
        let n_cols = out_columns.len();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for &r in rows {
            for (c, fitted) in self.columns.iter().enumerate() {
                match fitted {
                    FittedColumn::Continuous {
                        impute_value,
                        mean,
                        sd,
                        constant,
                        meta,
                    } => {
                        let raw = match frame.value(r, c) {
                            Value::Num(x) if x.is_finite() => x,
                            Value::Num(_) => {
                                return Err(Error::NonFiniteValue(meta.name.clone()))
                            }
                            Value::Missing => *impute_value,
                            Value::Cat(_) => {
                                return Err(Error::Invalid(format!(
                                    "categorical cell in continuous column `{}`",
                                    meta.name
                                )))
                            }
                        };
                        values.push(if *constant { 0.0 } else { (raw - mean) / sd });
                    }
                    FittedColumn::Categorical {
                        impute_mode,
                        levels,
                        ..
                    } => {
                        let cell = match frame.value(r, c) {
                            Value::Cat(s) => s,
                            Value::Missing => impute_mode.clone(),
                            Value::Num(x) => x.to_string(),
                        };
                        for level in levels {
                            values.push(if *level == cell { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
        Ok(FeatureMatrix {
            columns: out_columns,
            n_rows: rows.len(),
            values,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("pipeline json: {e}")))
    }
}

/// Impute missing cells with fit-row medians (continuous) or modes
/// (categorical), returning the filled frame and the fitted state.
pub fn impute(frame: &FeatureFrame, fit_rows: &[usize]) -> Result<(FeatureFrame, FittedPipeline)> {
    let fitted = FittedPipeline::fit(frame, fit_rows)?;
    let rows = (0..frame.n_rows())
        .map(|r| {
            frame.rows[r]
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if v.is_missing() {
                        match &fitted.columns[c] {
                            FittedColumn::Continuous { impute_value, .. } => {
                                Value::Num(*impute_value)
                            }
                            FittedColumn::Categorical { impute_mode, .. } => {
                                Value::Cat(impute_mode.clone())
                            }
                        }
                    } else {
                        v.clone()
                    }
                })
                .collect()
        })
        .collect();
    Ok((
        FeatureFrame {
            columns: frame.columns.clone(),
            rows,
        },
        fitted,
    ))
}

/// Z-score continuous columns and one-hot encode categorical ones using
/// fit-row statistics. The frame must already be imputed.
pub fn normalize_and_encode(frame: &FeatureFrame, fit_rows: &[usize]) -> Result<FeatureMatrix> {
    for row in &frame.rows {
        for (c, v) in row.iter().enumerate() {
            if v.is_missing() {
                return Err(Error::Invalid(format!(
                    "column `{}` still has missing values; impute first",
                    frame.columns[c].name
                )));
            }
        }
    }
    let fitted = FittedPipeline::fit(frame, fit_rows)?;
    let all_rows: Vec<usize> = (0..frame.n_rows()).collect();
    fitted.transform(frame, &all_rows)
}

/// One encoded output column of a [`FeatureMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixColumn {
    /// encoded name, e.g. `sex=male`
    pub name: String,
    /// raw column this was derived from
    pub source: String,
    pub temporal_tag: TemporalTag,
    pub provenance: Provenance,
    /// zero-variance continuous column, passed through as zeros
    pub constant: bool,
}

/// Fully numeric design matrix with per-column provenance and tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<MatrixColumn>,
    pub n_rows: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(columns: Vec<MatrixColumn>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * columns.len());
        for row in rows {
            if row.len() != columns.len() {
                return Err(Error::LengthMismatch(row.len(), columns.len()));
            }
            values.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            columns,
            values,
        })
    }

    /// Convenience constructor for tests and plain numeric data: all
    /// columns baseline/derived.
    pub fn from_numeric(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| MatrixColumn {
                name: n.to_string(),
                source: n.to_string(),
                temporal_tag: TemporalTag::Baseline,
                provenance: Provenance::Derived,
                constant: false,
            })
            .collect();
        Self::from_rows(columns, rows)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n_cols()..(r + 1) * self.n_cols()]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|col| col.name == name)
    }

    /// New matrix with the selected rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            n_rows: rows.len(),
            values,
        }
    }

    /// New matrix with the selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            n_rows: self.n_rows,
            values,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n_cols());
        self.values.extend_from_slice(row);
        self.n_rows += 1;
    }
}

/// Columns removed by the baseline gate, with their tags.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RemovalManifest {
    pub removed: Vec<(String, TemporalTag)>,
    pub retained: Vec<String>,
}

/// Keep only baseline-tagged columns. Idempotent; the manifest lists every
/// removed column with its tag so the removal is auditable.
pub fn baseline_only_filter(matrix: &FeatureMatrix) -> (FeatureMatrix, RemovalManifest) {
    let keep: Vec<usize> = (0..matrix.n_cols())
        .filter(|&c| matrix.columns[c].temporal_tag == TemporalTag::Baseline)
        .collect();
    let manifest = RemovalManifest {
        removed: matrix
            .columns
            .iter()
            .filter(|c| c.temporal_tag != TemporalTag::Baseline)
            .map(|c| (c.name.clone(), c.temporal_tag))
            .collect(),
        retained: keep
            .iter()
            .map(|&c| matrix.columns[c].name.clone())
            .collect(),
    };
    (matrix.select_columns(&keep), manifest)
}

/// Risk tertile by descending score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskTertile {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetabolicScore {
    pub score: f64,
    pub tertile: RiskTertile,
}

/// Composite metabolic score: z(NASH) + z(BMI) - z(liver HU), with
/// population z-statistics over the cohort. Tertiles are assigned by
/// descending score; medium and low take floor(n/3) patients each and high
/// absorbs the remainder, so n=197 splits 67/65/65. Ties at a boundary are
/// ordered by patient id.
pub fn metabolic_scores(cohort: &Cohort) -> Result<Vec<MetabolicScore>> {
    metabolic_scores_from(cohort, "nash_score", "bmi", "liver_hu")
}

pub fn metabolic_scores_from(
    cohort: &Cohort,
    nash_col: &str,
    bmi_col: &str,
    hu_col: &str,
) -> Result<Vec<MetabolicScore>> {
    let n = cohort.len();
    if n < 3 {
        return Err(Error::TooFewRows { need: 3, got: n });
    }
    let extract = |name: &str| -> Result<Vec<f64>> {
        let col = cohort
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        cohort
            .records()
            .iter()
            .map(|r| {
                r.values[col].as_num().ok_or_else(|| {
                    Error::Invalid(format!(
                        "`{name}` must be numeric and imputed before metabolic scoring"
                    ))
                })
            })
            .collect()
    };
    let nash = extract(nash_col)?;
    let bmi = extract(bmi_col)?;
    let hu = extract(hu_col)?;

    let z = |xs: &[f64]| -> Result<Vec<f64>> {
        let m = math::mean(xs);
        let sd = math::population_sd(xs);
        if sd == 0.0 {
            return Err(Error::Invalid(
                "constant metabolic input; z-score undefined".into(),
            ));
        }
        Ok(xs.iter().map(|x| (x - m) / sd).collect())
    };
    let (zn, zb, zh) = (z(&nash)?, z(&bmi)?, z(&hu)?);
    let scores: Vec<f64> = (0..n).map(|i| zn[i] + zb[i] - zh[i]).collect();
    Ok(assign_tertiles(&scores, |i| &cohort.records()[i].id))
}

/// Tertile assignment shared by metabolic scoring and risk grouping.
pub fn assign_tertiles<'a>(
    scores: &[f64],
    id_of: impl Fn(usize) -> &'a str,
) -> Vec<MetabolicScore> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap()
            .then_with(|| id_of(i).cmp(id_of(j)))
    });
    let third = n / 3;
    let high = n - 2 * third;
    let mut out = vec![
        MetabolicScore {
            score: 0.0,
            tertile: RiskTertile::Low
        };
        n
    ];
    for (rank, &i) in order.iter().enumerate() {
        let tertile = if rank < high {
            RiskTertile::High
        } else if rank < high + third {
            RiskTertile::Medium
        } else {
            RiskTertile::Low
        };
        out[i] = MetabolicScore {
            score: scores[i],
            tertile,
        };
    }
    out
}

/// Binary labels for one prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonLabels {
    pub horizon_months: f64,
    pub labels: Vec<u8>,
}

/// label = 1 iff the patient recurred and progression occurred within the
/// horizon. A missing progression time with no recurrence event is a clean
/// negative; with a recurrence event it is invalid input.
pub fn make_horizon_labels(cohort: &Cohort, horizon_months: f64) -> Result<HorizonLabels> {
    if !(horizon_months > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon_months}"
        )));
    }
    let labels = cohort
        .records()
        .iter()
        .map(|r| match (r.recurrence_event, r.months_to_progression) {
            (1, Some(m)) => Ok((m <= horizon_months) as u8),
            (1, None) => Err(Error::EventWithoutTime(r.id.clone())),
            (_, _) => Ok(0),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(HorizonLabels {
        horizon_months,
        labels,
    })
}

/// Deterministic stratified split. Each class contributes
/// round(fraction * class size) rows to the training set, clamped so both
/// parts keep at least one member per class.
pub fn stratified_split(
    labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadTrainFraction);
    }
    let classes = [0u8, 1u8];
    let mut by_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|&cls| {
            (0..labels.len())
                .filter(|&i| labels[i] == cls)
                .collect::<Vec<_>>()
        })
        .collect();
    if by_class.iter().any(|c| c.is_empty()) {
        return Err(Error::SingleClassLabels);
    }
    if by_class.iter().any(|c| c.len() < 2) {
        return Err(Error::ClassTooSmall(2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.iter_mut() {
        shuffle(members, &mut rng);
        let want = (train_fraction * members.len() as f64).round() as usize;
        let take = want.clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn shuffle(xs: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

/// Result of minority oversampling: the augmented matrix, augmented labels
/// and a per-row synthetic flag.
#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
    pub synthetic: Vec<bool>,
}

/// Balance the classes by interpolating minority rows toward their k
/// nearest minority neighbors: `x + u * (nn - x)` with `u ~ Uniform(0,1)`.
/// `k` is clamped to `minority count - 1`.
pub fn smote_oversample(
    matrix: &FeatureMatrix,
    labels: &[u8],
    k: usize,
    seed: u64,
) -> Result<SmoteOutput> {
    if labels.len() != matrix.n_rows {
        return Err(Error::LengthMismatch(labels.len(), matrix.n_rows));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("SMOTE k must be >= 1".into()));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClassLabels);
    }
    let (minority, minority_label) = if pos.len() <= neg.len() {
        (&pos, 1u8)
    } else {
        (&neg, 0u8)
    };
    let need = pos.len().abs_diff(neg.len());

    let mut out = matrix.clone();
    let mut out_labels = labels.to_vec();
    let mut synthetic = vec![false; labels.len()];
    if need == 0 {
        return Ok(SmoteOutput {
            matrix: out,
            labels: out_labels,
            synthetic,
        });
    }
    if minority.len() < 2 {
        return Err(Error::MinorityTooSmall(minority.len()));
    }
    let k_eff = k.min(minority.len() - 1);

    // k nearest minority neighbors per minority row; distance ties break to
    // the lower row index for determinism
    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let xi = matrix.row(i);
            let mut dists: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d = matrix
                        .row(j)
                        .iter()
                        .zip(xi)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d, j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            dists.into_iter().take(k_eff).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..need {
        let m = t % minority.len();
        let base = matrix.row(minority[m]);
        let nn = matrix.row(neighbors[m][rng.gen_range(0..k_eff)]);
        let u: f64 = rng.gen();
        let row: Vec<f64> = base
            .iter()
            .zip(nn)
            .map(|(x, y)| x + u * (y - x))
            .collect();
        out.push_row(&row);
        out_labels.push(minority_label);
        synthetic.push(true);
    }
    Ok(SmoteOutput {
        matrix: out,
        labels: out_labels,
        synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{PatientRecord, VariableSpec};
    use approx::assert_relative_eq;

    fn frame(cols: Vec<(&str, VariableKind)>, rows: Vec<Vec<Value>>) -> FeatureFrame {
        let columns = cols
            .into_iter()
            .map(|(name, kind)| ColumnMeta {
                name: name.into(),
                kind,
                temporal_tag: TemporalTag::Baseline,
                provenance: Provenance::Clinical,
            })
            .collect();
        FeatureFrame::new(columns, rows).unwrap()
    }

    fn num(x: f64) -> Value {
        Value::Num(x)
    }

    fn cat(s: &str) -> Value {
        Value::Cat(s.into())
    }

    fn simple_cohort(values: Vec<(f64, f64, f64)>) -> Cohort {
        let schema = ["nash_score", "bmi", "liver_hu"]
            .iter()
            .map(|n| VariableSpec {
                name: n.to_string(),
                kind: VariableKind::Continuous,
                temporal_tag: TemporalTag::Baseline,
            })
            .collect();
        let records = values
            .into_iter()
            .enumerate()
            .map(|(i, (n, b, h))| PatientRecord {
                id: format!("P{i:03}"),
                values: vec![num(n), num(b), num(h)],
                months_to_progression: None,
                recurrence_event: 0,
                os_months: 1.0,
                os_event: 0,
                dfs_months: 1.0,
                dfs_event: 0,
            })
            .collect();
        Cohort::new(schema, records).unwrap()
    }

    #[test]
    fn missingness_threshold_is_strict() {
        use crate::tabular::VariableSpec;
        // 100 records; col a 31% missing, col b exactly 30%, col c fully observed
        let schema = vec![
            VariableSpec {
                name: "a".into(),
                kind: VariableKind::Continuous,
                temporal_tag: TemporalTag::Baseline,
            },
            VariableSpec {
                name: "b".into(),
                kind: VariableKind::Continuous,
                temporal_tag: TemporalTag::Baseline,
            },
            VariableSpec {
                name: "c".into(),
                kind: VariableKind::Continuous,
                temporal_tag: TemporalTag::Baseline,
            },
        ];
        let records = (0..100)
            .map(|i| PatientRecord {
                id: format!("P{i}"),
                values: vec![
                    if i < 31 { Value::Missing } else { num(1.0) },
                    if i < 30 { Value::Missing } else { num(1.0) },
                    num(1.0),
                ],
                months_to_progression: None,
                recurrence_event: 0,
                os_months: 1.0,
                os_event: 0,
                dfs_months: 1.0,
                dfs_event: 0,
            })
            .collect();
        let cohort = Cohort::new(schema, records).unwrap();
        let (filtered, report) = drop_high_missingness(&cohort, 0.30).unwrap();
        assert_eq!(
            filtered
                .schema()
                .iter()
                .map(|s| s.name.as_str())
                .collect::<Vec<_>>(),
            vec!["b", "c"]
        );
        assert_eq!(report.removed, vec![("a".to_string(), 0.31)]);
    }

    #[test]
    fn impute_median_and_mode() {
        let f = frame(
            vec![
                ("x", VariableKind::Continuous),
                ("c", VariableKind::Categorical),
            ],
            vec![
                vec![num(1.0), cat("A")],
                vec![num(2.0), cat("A")],
                vec![Value::Missing, cat("B")],
                vec![num(100.0), Value::Missing],
            ],
        );
        let rows: Vec<usize> = (0..4).collect();
        let (filled, fitted) = impute(&f, &rows).unwrap();
        // median of observed {1, 2, 100} is 2, not 1.5
        assert_eq!(filled.rows[2][0], num(2.0));
        assert_eq!(filled.rows[3][1], cat("A"));
        match &fitted.columns[0] {
            FittedColumn::Continuous { impute_value, .. } => assert_eq!(*impute_value, 2.0),
            _ => panic!(),
        }
    }

    #[test]
    fn mode_ties_break_lexicographically() {
        let f = frame(
            vec![("c", VariableKind::Categorical)],
            vec![vec![cat("B")], vec![cat("A")], vec![Value::Missing]],
        );
        let (filled, _) = impute(&f, &[0, 1, 2]).unwrap();
        assert_eq!(filled.rows[2][0], cat("A"));
    }

    #[test]
    fn normalize_uses_population_sd() {
        let f = frame(
            vec![("x", VariableKind::Continuous)],
            vec![vec![num(2.0)], vec![num(4.0)]],
        );
        let m = normalize_and_encode(&f, &[0, 1]).unwrap();
        assert_relative_eq!(m.get(0, 0), -1.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(1, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_hot_rows_sum_to_one_and_unseen_is_zero() {
        let f = frame(
            vec![("c", VariableKind::Categorical)],
            vec![vec![cat("red")], vec![cat("blue")]],
        );
        let fitted = FittedPipeline::fit(&f, &[0, 1]).unwrap();
        let m = fitted.transform(&f, &[0, 1]).unwrap();
        assert_eq!(m.n_cols(), 2);
        assert_eq!(m.row(0).iter().sum::<f64>(), 1.0);
        assert_eq!(m.row(1).iter().sum::<f64>(), 1.0);

        let unseen = frame(
            vec![("c", VariableKind::Categorical)],
            vec![vec![cat("green")]],
        );
        let t = fitted.transform(&unseen, &[0]).unwrap();
        assert_eq!(t.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn zero_variance_column_flagged_and_zeroed() {
        let f = frame(
            vec![("x", VariableKind::Continuous)],
            vec![vec![num(5.0)], vec![num(5.0)]],
        );
        let m = normalize_and_encode(&f, &[0, 1]).unwrap();
        assert!(m.columns[0].constant);
        assert_eq!(m.column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn normalized_train_columns_are_standard() {
        let f = frame(
            vec![("x", VariableKind::Continuous), ("y", VariableKind::Continuous)],
            (0..40)
                .map(|i| vec![num(i as f64 * 1.7 - 3.0), num((i * i) as f64)])
                .collect(),
        );
        let fit_rows: Vec<usize> = (0..25).collect();
        let fitted = FittedPipeline::fit(&f, &fit_rows).unwrap();
        let train = fitted.transform(&f, &fit_rows).unwrap();
        for c in 0..train.n_cols() {
            let col = train.column(c);
            assert!(math::mean(&col).abs() < 1e-9);
            assert!((math::population_sd(&col) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn metabolic_score_hand_values() {
        // patient at the cohort mean scores 0; +1 SD on HU lowers by exactly 1
        let cohort = simple_cohort(vec![
            (0.0, 20.0, 60.0),
            (1.0, 25.0, 50.0),
            (2.0, 30.0, 40.0),
        ]);
        let scores = metabolic_scores(&cohort).unwrap();
        assert_relative_eq!(scores[1].score, 0.0, epsilon = 1e-12);
        // population z of a 3-point arithmetic progression is ±sqrt(3/2)
        let z1 = (1.5f64).sqrt();
        assert_relative_eq!(scores[0].score, -3.0 * z1, epsilon = 1e-12);
        assert_relative_eq!(scores[2].score, 3.0 * z1, epsilon = 1e-12);
        assert_eq!(scores[2].tertile, RiskTertile::High);

        // two patients identical except HU higher by +1 population SD
        let cohort = simple_cohort(vec![
            (1.0, 25.0, 45.0),
            (1.0, 25.0, 55.0),
            (1.0, 25.0, 50.0),
        ]);
        // constant nash/bmi are rejected; give them harmless variation
        let cohort2 = simple_cohort(vec![
            (1.0, 25.0, 45.0),
            (1.0 + 1e-9, 25.0 + 1e-9, 55.0),
            (2.0, 26.0, 50.0),
        ]);
        drop(cohort);
        let s = metabolic_scores(&cohort2).unwrap();
        let hu = [45.0, 55.0, 50.0];
        let sd = math::population_sd(&hu);
        let dz = 10.0 / sd;
        assert_relative_eq!(s[0].score - s[1].score, dz, epsilon = 1e-6);
    }

    #[test]
    fn tertile_sizes_at_197() {
        let scores: Vec<f64> = (0..197).map(|i| i as f64 * 0.01).collect();
        let ids: Vec<String> = (0..197).map(|i| format!("P{i:03}")).collect();
        let assigned = assign_tertiles(&scores, |i| &ids[i]);
        let count = |t: RiskTertile| assigned.iter().filter(|s| s.tertile == t).count();
        assert_eq!(count(RiskTertile::High), 67);
        assert_eq!(count(RiskTertile::Medium), 65);
        assert_eq!(count(RiskTertile::Low), 65);
    }

    #[test]
    fn metabolic_requires_three_patients() {
        let cohort = simple_cohort(vec![(0.0, 20.0, 60.0), (1.0, 25.0, 50.0)]);
        assert!(matches!(
            metabolic_scores(&cohort),
            Err(Error::TooFewRows { need: 3, .. })
        ));
    }

    fn labelled_cohort(data: Vec<(Option<f64>, u8)>) -> Cohort {
        let records = data
            .into_iter()
            .enumerate()
            .map(|(i, (months, event))| PatientRecord {
                id: format!("P{i}"),
                values: vec![],
                months_to_progression: months,
                recurrence_event: event,
                os_months: 1.0,
                os_event: 0,
                dfs_months: 1.0,
                dfs_event: 0,
            })
            .collect();
        Cohort::new(vec![], records).unwrap()
    }

    #[test]
    fn horizon_label_rule() {
        let cohort = labelled_cohort(vec![
            (Some(2.0), 1),
            (Some(4.0), 1),
            (Some(1.0), 0),
            (None, 0),
        ]);
        assert_eq!(make_horizon_labels(&cohort, 3.0).unwrap().labels, vec![1, 0, 0, 0]);
        assert_eq!(make_horizon_labels(&cohort, 6.0).unwrap().labels, vec![1, 1, 0, 0]);
    }

    #[test]
    fn horizon_labels_are_monotone_in_horizon() {
        let cohort =
            crate::tabular::synthetic::generate_synthetic_cohort(300, 5, Default::default())
                .unwrap();
        let l3 = make_horizon_labels(&cohort, 3.0).unwrap().labels;
        let l6 = make_horizon_labels(&cohort, 6.0).unwrap().labels;
        let l12 = make_horizon_labels(&cohort, 12.0).unwrap().labels;
        for i in 0..cohort.len() {
            assert!(l3[i] <= l6[i] && l6[i] <= l12[i]);
        }
    }

    #[test]
    fn split_matches_stratification_arithmetic() {
        let labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let (train, test) = stratified_split(&labels, 0.7, 42).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        let train_pos = train.iter().filter(|&&i| labels[i] == 1).count();
        assert!((train_pos as i64 - 3).abs() <= 1);
        // deterministic
        let again = stratified_split(&labels, 0.7, 42).unwrap();
        assert_eq!((train, test), again);
    }

    #[test]
    fn split_rejects_full_train_fraction() {
        let labels = [1, 1, 0, 0];
        assert!(matches!(
            stratified_split(&labels, 1.0, 1),
            Err(Error::BadTrainFraction)
        ));
    }

    #[test]
    fn smote_identical_minority_rows() {
        let m = FeatureMatrix::from_numeric(
            &["a", "b"],
            &[
                vec![3.0, 4.0],
                vec![3.0, 4.0],
                vec![0.0, 0.0],
                vec![0.1, 0.0],
                vec![0.2, 0.0],
                vec![0.3, 0.0],
            ],
        )
        .unwrap();
        let labels = [1, 1, 0, 0, 0, 0];
        let out = smote_oversample(&m, &labels, 5, 9).unwrap();
        assert_eq!(out.matrix.n_rows, 8);
        for r in 6..8 {
            assert_eq!(out.matrix.row(r), &[3.0, 4.0]);
            assert!(out.synthetic[r]);
            assert_eq!(out.labels[r], 1);
        }
    }

    #[test]
    fn smote_interpolates_on_segment() {
        let m = FeatureMatrix::from_numeric(
            &["a", "b"],
            &[
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![5.0, 5.0],
                vec![6.0, 5.0],
                vec![7.0, 5.0],
                vec![8.0, 5.0],
                vec![9.0, 5.0],
            ],
        )
        .unwrap();
        let labels = [1, 1, 0, 0, 0, 0, 0];
        let out = smote_oversample(&m, &labels, 1, 4).unwrap();
        assert_eq!(out.matrix.n_rows, 10);
        for r in 7..10 {
            let row = out.matrix.row(r);
            assert_relative_eq!(row[0], row[1], epsilon = 1e-12);
            assert!((0.0..=1.0).contains(&row[0]));
        }
    }

    #[test]
    fn smote_balances_20_5() {
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![i as f64, (i * 2) as f64])
            .collect();
        let m = FeatureMatrix::from_numeric(&["a", "b"], &rows).unwrap();
        let labels: Vec<u8> = (0..25).map(|i| u8::from(i < 5)).collect();
        let out = smote_oversample(&m, &labels, 5, 1).unwrap();
        let pos = out.labels.iter().filter(|&&l| l == 1).count();
        let neg = out.labels.iter().filter(|&&l| l == 0).count();
        assert_eq!((pos, neg), (20, 20));
    }

    #[test]
    fn smote_requires_two_minority_rows() {
        let m = FeatureMatrix::from_numeric(&["a"], &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            smote_oversample(&m, &[1, 0, 0], 5, 1),
            Err(Error::MinorityTooSmall(1))
        ));
    }

    #[test]
    fn baseline_filter_is_idempotent_and_audited() {
        let columns = vec![
            MatrixColumn {
                name: "age".into(),
                source: "age".into(),
                temporal_tag: TemporalTag::Baseline,
                provenance: Provenance::Clinical,
                constant: false,
            },
            MatrixColumn {
                name: "adjuvant".into(),
                source: "adjuvant".into(),
                temporal_tag: TemporalTag::Postoperative,
                provenance: Provenance::Clinical,
                constant: false,
            },
            MatrixColumn {
                name: "vital_status_dfs".into(),
                source: "vital_status_dfs".into(),
                temporal_tag: TemporalTag::Outcome,
                provenance: Provenance::Clinical,
                constant: false,
            },
        ];
        let m = FeatureMatrix::from_rows(columns, &[vec![1.0, 2.0, 3.0]]).unwrap();
        let (once, manifest) = baseline_only_filter(&m);
        assert_eq!(once.n_cols(), 1);
        assert_eq!(manifest.removed.len(), 2);
        assert!(manifest
            .removed
            .iter()
            .any(|(n, t)| n == "vital_status_dfs" && *t == TemporalTag::Outcome));
        let (twice, manifest2) = baseline_only_filter(&once);
        assert_eq!(once, twice);
        assert!(manifest2.removed.is_empty());
    }

    #[test]
    fn tracked_frame_records_reads() {
        let f = frame(
            vec![("x", VariableKind::Continuous)],
            vec![vec![num(1.0)], vec![num(2.0)], vec![num(3.0)]],
        );
        let tracked = TrackedFrame::new(&f);
        let fitted = FittedPipeline::fit(&tracked, &[0, 2]).unwrap();
        assert_eq!(tracked.touched(), BTreeSet::from([0, 2]));
        tracked.clear();
        let _ = fitted.transform(&tracked, &[1]).unwrap();
        assert_eq!(tracked.touched(), BTreeSet::from([1]));
    }

    #[test]
    fn pipeline_state_round_trips_json() {
        let f = frame(
            vec![
                ("x", VariableKind::Continuous),
                ("c", VariableKind::Categorical),
            ],
            vec![
                vec![num(1.0), cat("A")],
                vec![num(3.0), cat("B")],
            ],
        );
        let fitted = FittedPipeline::fit(&f, &[0, 1]).unwrap();
        let back = FittedPipeline::from_json(&fitted.to_json()).unwrap();
        assert_eq!(fitted, back);
    }
}
