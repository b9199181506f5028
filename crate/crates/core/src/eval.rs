//! Discrimination metrics, bootstrap confidence intervals, stratified
//! cross-validation with fold-internal preprocessing, and the temporal
//! leakage audit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::models::{feature_importance, fit_model, ModelSpec, TrainedModel};
use crate::preprocess::{
    smote_oversample, FeatureFrame, FittedPipeline, FrameSource, TrackedFrame,
};
use crate::tabular::TemporalTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    /// threshold sweep from (0,0) to (1,1)
    pub curve: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// AUC by the Mann-Whitney formulation: (concordant + 0.5 tied) pairs over
/// n_pos * n_neg, computed exactly via integer midrank sums.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::NonFiniteValue("score".into()));
        }
    }

    // doubled midranks stay integral, so the pair count is exact
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    let mut rank2_pos_sum: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let doubled_rank = (i + j + 2) as u128; // 2 * average 1-based rank
        for k in i..=j {
            if labels[idx[k]] == 1 {
                rank2_pos_sum += doubled_rank;
            }
        }
        i = j + 1;
    }
    let numerator = rank2_pos_sum - (n_pos as u128) * (n_pos as u128 + 1);
    let auc = numerator as f64 / (2.0 * n_pos as f64 * n_neg as f64);

    // threshold sweep over unique scores, descending
    let mut curve = Vec::new();
    curve.push(RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut k = n;
    while k > 0 {
        let score = scores[idx[k - 1]];
        while k > 0 && scores[idx[k - 1]] == score {
            if labels[idx[k - 1]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: score,
        });
    }
    Ok(RocResult {
        auc,
        curve,
        n_pos,
        n_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Ratios are `None` when their denominator is zero rather than fabricated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub confusion: Confusion,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

/// Confusion matrix and derived ratios with "score >= threshold" counting
/// as a positive prediction.
pub fn threshold_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ThresholdMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ThresholdMetrics {
        threshold,
        confusion: Confusion { tp, fp, tn, fn_ },
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_iterations: usize,
    pub seed: u64,
    /// resamples skipped because one class was absent
    pub n_degenerate: usize,
    /// metric value per kept resample, in iteration order
    pub samples: Vec<f64>,
}

/// Percentile bootstrap over patient resamples. Single-class resamples are
/// skipped and counted; more than 50% degenerate resamples is an error.
/// The 2.5th/97.5th bounds are order statistics of `samples`.
pub fn bootstrap_ci<F>(
    metric: F,
    scores: &[f64],
    labels: &[u8],
    n_iterations: usize,
    seed: u64,
) -> Result<BootstrapCI>
where
    F: Fn(&[f64], &[u8]) -> Result<f64>,
{
    if n_iterations < 100 {
        return Err(Error::InvalidParameter(
            "bootstrap needs at least 100 iterations".into(),
        ));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n = scores.len();
    let point = metric(scores, labels)?;

    let mut samples = Vec::with_capacity(n_iterations);
    let mut n_degenerate = 0usize;
    for iter in 0..n_iterations {
        // per-iteration stream so results are independent of scheduling
        let mut rng = ChaCha8Rng::seed_from_u64(crate::models::derive_seed(seed, iter as u64));
        let mut s = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            s.push(scores[k]);
            l.push(labels[k]);
        }
        if l.iter().all(|&v| v == l[0]) {
            n_degenerate += 1;
            continue;
        }
        samples.push(metric(&s, &l)?);
    }
    if n_degenerate * 2 > n_iterations {
        return Err(Error::DegenerateResamples {
            degenerate: n_degenerate,
            total: n_iterations,
        });
    }
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len();
    let order_stat = |q: f64| {
        let k = ((q * m as f64).ceil() as usize).clamp(1, m);
        sorted[k - 1]
    };
    Ok(BootstrapCI {
        point,
        lower: order_stat(0.025),
        upper: order_stat(0.975),
        n_iterations,
        seed,
        n_degenerate,
        samples,
    })
}

/// AUC as a plain metric function for the bootstrap.
pub fn auc_metric(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(roc_auc(scores, labels)?.auc)
}

/// Train/test indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin
/// across folds.
pub fn stratified_folds(labels: &[u8], n_folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if n_folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    if n_folds > labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{n_folds} folds for {} rows",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for cls in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cls).collect();
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for (k, &row) in members.iter().enumerate() {
            assignment[row] = k % n_folds;
        }
    }
    Ok((0..n_folds)
        .map(|f| Fold {
            train: (0..labels.len()).filter(|&i| assignment[i] != f).collect(),
            test: (0..labels.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect())
}

/// Fit-phase row accesses for one fold.
#[derive(Debug, Clone, Serialize)]
pub struct FoldAccess {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub touched_during_fit: Vec<usize>,
    /// true when every touched row is a training row
    pub clean: bool,
}

/// Certificate that no fold's fit phase read a held-out row.
#[derive(Debug, Clone, Serialize)]
pub struct FitAccessAudit {
    pub folds: Vec<FoldAccess>,
    pub clean: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// oversample the training part of each fold to balance classes
    pub smote_k: Option<usize>,
    /// drop non-baseline columns after encoding
    pub baseline_only: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            smote_k: Some(5),
            baseline_only: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvResult {
    /// per-fold test AUC; None when the test fold is single-class
    pub fold_aucs: Vec<Option<f64>>,
    pub mean_auc: f64,
    /// sample SD over the defined folds
    pub sd_auc: f64,
    #[serde(skip)]
    pub access_audit: FitAccessAudit,
}

/// Stratified cross-validation with the entire preprocessing pipeline
/// (imputation, normalization, encoding, optional SMOTE) fitted inside each
/// fold's training rows. Row reads during fitting are tracked and returned
/// as an access audit.
pub fn cross_validate(
    frame: &FeatureFrame,
    labels: &[u8],
    spec: &ModelSpec,
    n_folds: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<CvResult> {
    if labels.len() != frame.n_rows() {
        return Err(Error::LengthMismatch(labels.len(), frame.n_rows()));
    }
    let folds = stratified_folds(labels, n_folds, seed)?;
    for (fi, fold) in folds.iter().enumerate() {
        let train_labels: Vec<u8> = fold.train.iter().map(|&r| labels[r]).collect();
        if train_labels.iter().all(|&l| l == train_labels[0]) {
            return Err(Error::Invalid(format!(
                "fold {fi} has single-class training labels"
            )));
        }
    }

    let outcomes: Result<Vec<(Option<f64>, FoldAccess)>> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, fold)| {
            let tracked = TrackedFrame::new(frame);
            let train_labels: Vec<u8> = fold.train.iter().map(|&r| labels[r]).collect();

            // fit phase: pipeline statistics, encoding, SMOTE, model fit
            let pipeline = FittedPipeline::fit(&tracked, &fold.train)?;
            let train_matrix = pipeline.transform(&tracked, &fold.train)?;
            let (train_matrix, _) = if options.baseline_only {
                crate::preprocess::baseline_only_filter(&train_matrix)
            } else {
                (train_matrix.clone(), Default::default())
            };
            let (train_matrix, train_labels) = match options.smote_k {
                Some(k) => {
                    let out = smote_oversample(
                        &train_matrix,
                        &train_labels,
                        k,
                        crate::models::derive_seed(seed, 1_000 + fi as u64),
                    )?;
                    (out.matrix, out.labels)
                }
                None => (train_matrix, train_labels),
            };
            let model = fit_model(
                spec,
                &train_matrix,
                &train_labels,
                crate::models::derive_seed(seed, fi as u64),
            )?;
            let touched: Vec<usize> = tracked.touched().into_iter().collect();
            let clean = touched.iter().all(|r| fold.train.contains(r));
            let access = FoldAccess {
                fold: fi,
                train_rows: fold.train.clone(),
                touched_during_fit: touched,
                clean,
            };

            // evaluation phase on the held-out rows
            let test_matrix = pipeline.transform(frame, &fold.test)?;
            let (test_matrix, _) = if options.baseline_only {
                crate::preprocess::baseline_only_filter(&test_matrix)
            } else {
                (test_matrix.clone(), Default::default())
            };
            let test_labels: Vec<u8> = fold.test.iter().map(|&r| labels[r]).collect();
            let auc = if test_labels.iter().all(|&l| l == test_labels[0]) {
                None
            } else {
                let probs = model.predict_proba(&test_matrix);
                Some(roc_auc(&probs, &test_labels)?.auc)
            };
            Ok((auc, access))
        })
        .collect();
    let outcomes = outcomes?;

    let defined: Vec<f64> = outcomes.iter().filter_map(|(a, _)| *a).collect();
    if defined.is_empty() {
        return Err(Error::SingleClassLabels);
    }
    let audit_folds: Vec<FoldAccess> = outcomes.iter().map(|(_, a)| a.clone()).collect();
    let clean = audit_folds.iter().all(|f| f.clean);
    Ok(CvResult {
        fold_aucs: outcomes.into_iter().map(|(a, _)| a).collect(),
        mean_auc: math::mean(&defined),
        sd_auc: math::sample_sd(&defined),
        access_audit: FitAccessAudit {
            folds: audit_folds,
            clean,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakageVerdict {
    Clean,
    Leaked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedFeature {
    pub name: String,
    pub temporal_tag: TemporalTag,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAuditReport {
    pub verdict: LeakageVerdict,
    /// every non-baseline column that was available to the model
    pub flagged_features: Vec<FlaggedFeature>,
    /// importance mass of flagged features among the top five
    pub top5_flagged_cumulative_importance: f64,
    pub importance_threshold: f64,
}

impl LeakageAuditReport {
    /// Human-readable rendering for the text report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "leakage audit verdict: {}\n",
            match self.verdict {
                LeakageVerdict::Clean => "clean",
                LeakageVerdict::Leaked => "LEAKED",
            }
        ));
        out.push_str(&format!(
            "flagged importance in top 5: {:.3} (threshold {:.2})\n",
            self.top5_flagged_cumulative_importance, self.importance_threshold
        ));
        if self.flagged_features.is_empty() {
            out.push_str("no non-baseline features were available to the model\n");
        } else {
            out.push_str("non-baseline features available to the model:\n");
            for f in &self.flagged_features {
                out.push_str(&format!(
                    "  {:<42} {:<14} importance {:.4}\n",
                    f.name,
                    f.temporal_tag.to_string(),
                    f.importance
                ));
            }
        }
        out
    }
}

/// Flag every postoperative- or outcome-tagged column available to the
/// model; the verdict is leaked when any exists, or when flagged features
/// capture more than `importance_threshold` of the top-5 importance mass.
pub fn leakage_audit(
    model: &TrainedModel,
    matrix: &crate::preprocess::FeatureMatrix,
    importance_threshold: f64,
) -> Result<LeakageAuditReport> {
    let names: Vec<&str> = matrix.columns.iter().map(|c| c.name.as_str()).collect();
    let model_names: Vec<&str> = model.feature_names().iter().map(|s| s.as_str()).collect();
    if names != model_names {
        return Err(Error::Invalid(
            "matrix columns do not match the model's inputs".into(),
        ));
    }
    let report = feature_importance(model);
    let is_baseline = |name: &str| {
        matrix
            .columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.temporal_tag == TemporalTag::Baseline)
            .unwrap_or(false)
    };
    let mut flagged: Vec<FlaggedFeature> = matrix
        .columns
        .iter()
        .filter(|c| c.temporal_tag != TemporalTag::Baseline)
        .map(|c| FlaggedFeature {
            name: c.name.clone(),
            temporal_tag: c.temporal_tag,
            importance: report.importance_of(&c.name),
        })
        .collect();
    flagged.sort_by(|a, b| b.importance.partial_cmp(&a.importance).unwrap());

    let top5_mass: f64 = report
        .entries
        .iter()
        .take(5)
        .filter(|(name, _)| !is_baseline(name))
        .map(|(_, v)| v)
        .sum();
    let verdict = if !flagged.is_empty() || top5_mass > importance_threshold {
        LeakageVerdict::Leaked
    } else {
        LeakageVerdict::Clean
    };
    Ok(LeakageAuditReport {
        verdict,
        flagged_features: flagged,
        top5_flagged_cumulative_importance: top5_mass,
        importance_threshold,
    })
}

impl Default for FitAccessAudit {
    fn default() -> Self {
        FitAccessAudit {
            folds: Vec::new(),
            clean: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn auc_trivial_cases() {
        let perfect = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let ties = roc_auc(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]).unwrap();
        assert_eq!(ties.auc, 0.5);
    }

    #[test]
    fn auc_hand_enumeration() {
        // pairs: (0.35 vs 0.1) c, (0.35 vs 0.4) d, (0.8 vs 0.1) c, (0.8 vs 0.4) c
        let roc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!(roc.auc, 0.75);
    }

    #[test]
    fn curve_is_monotone_and_anchored() {
        let scores = [0.3, 0.1, 0.9, 0.5, 0.5, 0.2];
        let labels = [0, 0, 1, 1, 0, 1];
        let roc = roc_auc(&scores, &labels).unwrap();
        let first = roc.curve.first().unwrap();
        let last = roc.curve.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.curve.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::SingleClassLabels)
        ));
    }

    #[test]
    fn threshold_metric_cases() {
        let scores = [0.9, 0.2];
        let labels = [1, 0];
        let m = threshold_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(1.0));

        let everyone = threshold_metrics(&scores, &labels, 0.0).unwrap();
        assert_eq!(everyone.sensitivity, Some(1.0));
        assert_eq!(everyone.npv, None); // nobody predicted negative

        let nobody = threshold_metrics(&scores, &labels, 1.1).unwrap();
        assert_eq!(nobody.specificity, Some(1.0));
        assert_eq!(nobody.sensitivity, Some(0.0));
    }

    #[test]
    fn bootstrap_constant_metric_collapses() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
        let ci = bootstrap_ci(|_, _| Ok(0.7), &scores, &labels, 200, 5).unwrap();
        assert_eq!((ci.lower, ci.point, ci.upper), (0.7, 0.7, 0.7));
    }

    #[test]
    fn bootstrap_deterministic_and_order_statistics() {
        let scores: Vec<f64> = (0..60).map(|i| (i as f64 * 0.618).fract()).collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from((i * 7) % 3 == 0)).collect();
        let a = bootstrap_ci(auc_metric, &scores, &labels, 300, 11).unwrap();
        let b = bootstrap_ci(auc_metric, &scores, &labels, 300, 11).unwrap();
        assert_eq!(a, b);
        // bounds are order statistics of the recorded samples
        let mut sorted = a.samples.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!(sorted.contains(&a.lower) && sorted.contains(&a.upper));
        assert!(a.lower <= a.upper);
    }

    #[test]
    fn auc_invariance_properties() {
        let scores: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let labels: Vec<u8> = (0..50).map(|i| u8::from((i * 13) % 5 < 2)).collect();
        let base = roc_auc(&scores, &labels).unwrap().auc;

        // strictly increasing transform leaves AUC unchanged
        let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp()).collect();
        assert_eq!(roc_auc(&transformed, &labels).unwrap().auc, base);

        // sign flip maps AUC to 1 - AUC
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        assert_relative_eq!(roc_auc(&flipped, &labels).unwrap().auc, 1.0 - base, epsilon = 1e-12);
    }

    #[test]
    fn folds_cover_rows_exactly_once() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for fold in &folds {
            for &r in &fold.test {
                seen[r] += 1;
            }
            for &r in &fold.train {
                assert!(!fold.test.contains(&r));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn leave_one_out_produces_n_folds() {
        let labels = [1, 0, 1, 0, 1, 0];
        let folds = stratified_folds(&labels, 6, 1).unwrap();
        assert_eq!(folds.len(), 6);
        for fold in &folds {
            assert_eq!(fold.test.len(), 1);
        }
    }
}
