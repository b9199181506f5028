//! Classifiers and ensembles: L1-regularized logistic regression, CART,
//! random forest, gradient boosting, soft-voting combination and the
//! multi-horizon bundle, plus feature-importance reporting and versioned
//! JSON serialization.
//!
//! Fitted models are immutable and safe for concurrent prediction;
//! independent fits (ensemble members, horizon models) run in parallel.

pub mod boosting;
pub mod forest;
pub mod lasso;
pub mod tree;

pub use boosting::{fit_gradient_boosting, BoostingConfig, GradientBoostingModel};
pub use forest::{fit_random_forest, FeatureSubsample, ForestConfig, RandomForestModel};
pub use lasso::{
    fit_lasso_logistic, kkt_residual, lambda_grid, lambda_max, lasso_objective,
    LassoLogisticModel, LASSO_DEFAULT_MAX_ITER, LASSO_DEFAULT_TOL,
};
pub use tree::{fit_cart, CartConfig, CartTree, SplitCriterion, TreeNode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;

/// Declarative model description; fully serializable so a run config can
/// pin the exact learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    LassoLogistic {
        /// penalty; selected by cross-validation when absent
        lambda: Option<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    RandomForest(ForestConfig),
    GradientBoosting(BoostingConfig),
    Voting {
        members: Vec<ModelSpec>,
        /// non-negative member weights; equal when absent
        weights: Option<Vec<f64>>,
    },
}

fn default_tol() -> f64 {
    LASSO_DEFAULT_TOL
}

fn default_max_iter() -> usize {
    LASSO_DEFAULT_MAX_ITER
}

impl ModelSpec {
    /// The default soft-voting ensemble: random forest, gradient boosting
    /// and LASSO logistic regression with equal weights.
    pub fn default_ensemble() -> ModelSpec {
        ModelSpec::Voting {
            members: vec![
                ModelSpec::RandomForest(ForestConfig::default()),
                ModelSpec::GradientBoosting(BoostingConfig::default()),
                ModelSpec::LassoLogistic {
                    lambda: Some(0.01),
                    tol: LASSO_DEFAULT_TOL,
                    max_iter: LASSO_DEFAULT_MAX_ITER,
                },
            ],
            weights: None,
        }
    }
}

/// A fitted classifier of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Lasso(LassoLogisticModel),
    Forest(RandomForestModel),
    Boosting(GradientBoostingModel),
    Voting(VotingEnsemble),
}

/// Weighted soft vote over independently fitted members; the output is the
/// weighted mean of member probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingEnsemble {
    pub members: Vec<TrainedModel>,
    /// normalized to sum to 1
    pub weights: Vec<f64>,
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            TrainedModel::Lasso(m) => m.predict_row(row),
            TrainedModel::Forest(m) => m.predict_row(row),
            TrainedModel::Boosting(m) => m.predict_row(row),
            TrainedModel::Voting(v) => v
                .members
                .iter()
                .zip(&v.weights)
                .map(|(m, w)| w * m.predict_row(row))
                .sum(),
        }
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows).map(|r| self.predict_row(x.row(r))).collect()
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Lasso(m) => &m.feature_names,
            TrainedModel::Forest(m) => &m.feature_names,
            TrainedModel::Boosting(m) => &m.feature_names,
            TrainedModel::Voting(v) => v.members[0].feature_names(),
        }
    }
}

/// Mix a derived seed for an independent sub-fit.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ (stream.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fit any model spec on a numeric matrix with binary labels.
pub fn fit_model(
    spec: &ModelSpec,
    x: &FeatureMatrix,
    y: &[u8],
    seed: u64,
) -> Result<TrainedModel> {
    match spec {
        ModelSpec::LassoLogistic {
            lambda,
            tol,
            max_iter,
        } => {
            let lambda = match lambda {
                Some(l) => *l,
                None => select_lasso_lambda(x, y, seed)?.0,
            };
            Ok(TrainedModel::Lasso(fit_lasso_logistic(
                x, y, lambda, *tol, *max_iter,
            )?))
        }
        ModelSpec::RandomForest(cfg) => {
            Ok(TrainedModel::Forest(fit_random_forest(x, y, cfg, seed)?))
        }
        ModelSpec::GradientBoosting(cfg) => Ok(TrainedModel::Boosting(fit_gradient_boosting(
            x, y, cfg, seed,
        )?)),
        ModelSpec::Voting { members, weights } => {
            if members.is_empty() {
                return Err(Error::InvalidParameter("voting ensemble needs members".into()));
            }
            let weights = match weights {
                None => vec![1.0 / members.len() as f64; members.len()],
                Some(w) => {
                    if w.len() != members.len() {
                        return Err(Error::LengthMismatch(w.len(), members.len()));
                    }
                    if w.iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidParameter("voting weights must be >= 0".into()));
                    }
                    let total: f64 = w.iter().sum();
                    if total <= 0.0 {
                        return Err(Error::InvalidParameter("voting weights sum to zero".into()));
                    }
                    w.iter().map(|v| v / total).collect()
                }
            };
            let fitted: Result<Vec<TrainedModel>> = members
                .par_iter()
                .enumerate()
                .map(|(i, member)| fit_model(member, x, y, derive_seed(seed, i as u64)))
                .collect();
            Ok(TrainedModel::Voting(VotingEnsemble {
                members: fitted?,
                weights,
            }))
        }
    }
}

/// Pick the LASSO penalty by 5-fold cross-validated AUC over a logarithmic
/// grid of 30 values spanning four decades below `lambda_max`. AUC ties
/// resolve to the larger (sparser) penalty.
pub fn select_lasso_lambda(
    x: &FeatureMatrix,
    y: &[u8],
    seed: u64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let grid = lambda_grid(x, y);
    let folds = crate::eval::stratified_folds(y, 5, seed)?;
    let mut table: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    let mut scores = vec![(0.0, 0usize); grid.len()];
    for fold in &folds {
        let train_x = x.select_rows(&fold.train);
        let train_y: Vec<u8> = fold.train.iter().map(|&r| y[r]).collect();
        let test_x = x.select_rows(&fold.test);
        let test_y: Vec<u8> = fold.test.iter().map(|&r| y[r]).collect();
        if test_y.iter().all(|&l| l == test_y[0]) {
            continue;
        }
        for (gi, &lambda) in grid.iter().enumerate() {
            let model = fit_lasso_logistic(&train_x, &train_y, lambda, 1e-5, 2_000)?;
            let probs: Vec<f64> = (0..test_x.n_rows)
                .map(|r| model.predict_row(test_x.row(r)))
                .collect();
            if let Ok(roc) = crate::eval::roc_auc(&probs, &test_y) {
                scores[gi].0 += roc.auc;
                scores[gi].1 += 1;
            }
        }
    }
    let mut best = (grid[0], f64::NEG_INFINITY);
    for (gi, &lambda) in grid.iter().enumerate() {
        let mean = if scores[gi].1 > 0 {
            scores[gi].0 / scores[gi].1 as f64
        } else {
            f64::NEG_INFINITY
        };
        table.push((lambda, mean));
        if mean > best.1 {
            best = (lambda, mean);
        }
    }
    Ok((best.0, table))
}

/// One model per horizon, all trained on the same feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHorizonModel {
    /// (horizon in months, fitted model), ascending horizons
    pub horizons: Vec<(f64, TrainedModel)>,
}

impl MultiHorizonModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        self.horizons.iter().map(|(_, m)| m.predict_row(row)).collect()
    }

    pub fn model_for(&self, horizon: f64) -> Option<&TrainedModel> {
        self.horizons
            .iter()
            .find(|(h, _)| *h == horizon)
            .map(|(_, m)| m)
    }
}

/// Fit one independent classifier per horizon.
pub fn fit_multi_horizon(
    x: &FeatureMatrix,
    labels_by_horizon: &[(f64, Vec<u8>)],
    spec: &ModelSpec,
    seed: u64,
) -> Result<MultiHorizonModel> {
    if labels_by_horizon.is_empty() {
        return Err(Error::InvalidParameter("no horizons supplied".into()));
    }
    for (_, labels) in labels_by_horizon {
        if labels.len() != x.n_rows {
            return Err(Error::LengthMismatch(labels.len(), x.n_rows));
        }
    }
    let horizons: Result<Vec<(f64, TrainedModel)>> = labels_by_horizon
        .par_iter()
        .map(|(h, labels)| Ok((*h, fit_model(spec, x, labels, seed)?)))
        .collect();
    Ok(MultiHorizonModel { horizons: horizons? })
}

/// Ranked, normalized feature importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportanceReport {
    /// descending by importance; ties by name
    pub entries: Vec<(String, f64)>,
}

impl FeatureImportanceReport {
    pub fn cumulative_top_k(&self, k: usize) -> f64 {
        self.entries.iter().take(k).map(|(_, v)| v).sum()
    }

    pub fn importance_of(&self, name: &str) -> f64 {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    }
}

fn normalize(mut raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        for v in raw.iter_mut() {
            *v /= total;
        }
    }
    raw
}

fn raw_importances(model: &TrainedModel) -> Vec<f64> {
    match model {
        TrainedModel::Lasso(m) => normalize(
            m.coefficients
                .iter()
                .zip(&m.feature_sd)
                .map(|(b, sd)| b.abs() * sd)
                .collect(),
        ),
        TrainedModel::Forest(m) => {
            let p = m.feature_names.len();
            let mut acc = vec![0.0; p];
            for tree in &m.trees {
                for (j, v) in tree.importances.iter().enumerate() {
                    acc[j] += v;
                }
            }
            normalize(acc)
        }
        TrainedModel::Boosting(m) => {
            let p = m.feature_names.len();
            let mut acc = vec![0.0; p];
            for tree in &m.trees {
                for (j, v) in tree.importances.iter().enumerate() {
                    acc[j] += v;
                }
            }
            normalize(acc)
        }
        TrainedModel::Voting(v) => {
            let p = v.members[0].feature_names().len();
            let mut acc = vec![0.0; p];
            for (member, w) in v.members.iter().zip(&v.weights) {
                for (j, imp) in raw_importances(member).iter().enumerate() {
                    acc[j] += w * imp;
                }
            }
            normalize(acc)
        }
    }
}

/// Normalized descending importance ranking: impurity decrease for tree
/// models, |coefficient| * feature SD for the LASSO, the weighted member
/// mean for voting ensembles.
pub fn feature_importance(model: &TrainedModel) -> FeatureImportanceReport {
    let names = model.feature_names();
    let raw = raw_importances(model);
    let mut entries: Vec<(String, f64)> = names.iter().cloned().zip(raw).collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    FeatureImportanceReport { entries }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedModel<T> {
    version: u32,
    model: T,
}

pub fn model_to_json(model: &TrainedModel) -> String {
    serde_json::to_string_pretty(&VersionedModel {
        version: MODEL_FORMAT_VERSION,
        model,
    })
    .expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let v: VersionedModel<TrainedModel> =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("model json: {e}")))?;
    if v.version != MODEL_FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported model format version {}",
            v.version
        )));
    }
    Ok(v.model)
}

pub fn multi_horizon_to_json(model: &MultiHorizonModel) -> String {
    serde_json::to_string_pretty(&VersionedModel {
        version: MODEL_FORMAT_VERSION,
        model,
    })
    .expect("model serializes")
}

pub fn multi_horizon_from_json(text: &str) -> Result<MultiHorizonModel> {
    let v: VersionedModel<MultiHorizonModel> =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("model json: {e}")))?;
    if v.version != MODEL_FORMAT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported model format version {}",
            v.version
        )));
    }
    Ok(v.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_data(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen::<f64>() * 4.0 - 2.0;
            let b: f64 = rng.gen::<f64>() * 4.0 - 2.0;
            rows.push(vec![a, b]);
            y.push(u8::from(a + 0.3 * b + 0.3 * (rng.gen::<f64>() - 0.5) > 0.0));
        }
        (FeatureMatrix::from_numeric(&["a", "b"], &rows).unwrap(), y)
    }

    #[test]
    fn single_member_voting_is_identity() {
        let (x, y) = toy_data(80, 1);
        let spec = ModelSpec::Voting {
            members: vec![ModelSpec::GradientBoosting(BoostingConfig::default())],
            weights: None,
        };
        let voting = fit_model(&spec, &x, &y, 3).unwrap();
        let alone = fit_model(
            &ModelSpec::GradientBoosting(BoostingConfig::default()),
            &x,
            &y,
            derive_seed(3, 0),
        )
        .unwrap();
        for r in 0..x.n_rows {
            assert_relative_eq!(
                voting.predict_row(x.row(r)),
                alone.predict_row(x.row(r)),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn voting_is_the_weighted_mean() {
        let (x, y) = toy_data(60, 2);
        let spec = ModelSpec::Voting {
            members: vec![
                ModelSpec::GradientBoosting(BoostingConfig {
                    n_trees: 10,
                    ..Default::default()
                }),
                ModelSpec::LassoLogistic {
                    lambda: Some(0.05),
                    tol: 1e-7,
                    max_iter: 5_000,
                },
            ],
            weights: Some(vec![2.0, 6.0]),
        };
        let model = fit_model(&spec, &x, &y, 5).unwrap();
        let TrainedModel::Voting(v) = &model else {
            panic!()
        };
        assert_relative_eq!(v.weights[0], 0.25, epsilon = 1e-15);
        for r in 0..x.n_rows {
            let expected = 0.25 * v.members[0].predict_row(x.row(r))
                + 0.75 * v.members[1].predict_row(x.row(r));
            assert_relative_eq!(model.predict_row(x.row(r)), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn weight_one_zero_equals_first_member() {
        let (x, y) = toy_data(60, 4);
        let spec = ModelSpec::Voting {
            members: vec![
                ModelSpec::RandomForest(ForestConfig {
                    n_trees: 5,
                    ..Default::default()
                }),
                ModelSpec::GradientBoosting(BoostingConfig {
                    n_trees: 5,
                    ..Default::default()
                }),
            ],
            weights: Some(vec![1.0, 0.0]),
        };
        let model = fit_model(&spec, &x, &y, 6).unwrap();
        let TrainedModel::Voting(v) = &model else {
            panic!()
        };
        for r in 0..x.n_rows {
            assert_relative_eq!(
                model.predict_row(x.row(r)),
                v.members[0].predict_row(x.row(r)),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn negative_weights_rejected() {
        let spec = ModelSpec::Voting {
            members: vec![ModelSpec::GradientBoosting(BoostingConfig::default())],
            weights: Some(vec![-1.0]),
        };
        let (x, y) = toy_data(30, 7);
        assert!(fit_model(&spec, &x, &y, 0).is_err());
    }

    #[test]
    fn multi_horizon_identical_labels_identical_models() {
        let (x, y) = toy_data(60, 8);
        let labels = vec![(3.0, y.clone()), (6.0, y.clone()), (12.0, y)];
        let spec = ModelSpec::GradientBoosting(BoostingConfig {
            n_trees: 10,
            ..Default::default()
        });
        let model = fit_multi_horizon(&x, &labels, &spec, 11).unwrap();
        assert_eq!(model.horizons[0].1, model.horizons[1].1);
        assert_eq!(model.horizons[1].1, model.horizons[2].1);
        for r in 0..x.n_rows {
            for p in model.predict_row(x.row(r)) {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn importance_invariants() {
        let (x, y) = toy_data(100, 9);
        // single informative feature
        let x1 = x.select_columns(&[0]);
        let m = fit_model(
            &ModelSpec::GradientBoosting(BoostingConfig::default()),
            &x1,
            &y,
            1,
        )
        .unwrap();
        let report = feature_importance(&m);
        assert_relative_eq!(report.entries[0].1, 1.0, epsilon = 1e-9);
        assert_relative_eq!(report.cumulative_top_k(1), 1.0, epsilon = 1e-9);

        // lasso zero coefficient has zero importance
        let lasso = fit_lasso_logistic(&x, &y, 10.0, 1e-8, 10_000).unwrap();
        assert_eq!(lasso.n_nonzero(), 0);
        let report = feature_importance(&TrainedModel::Lasso(lasso));
        assert!(report.entries.iter().all(|(_, v)| *v == 0.0));

        // tree importances sum to 1
        let forest = fit_model(&ModelSpec::RandomForest(ForestConfig::default()), &x, &y, 2).unwrap();
        let report = feature_importance(&forest);
        let total: f64 = report.entries.iter().map(|(_, v)| v).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn serialization_round_trip() {
        let (x, y) = toy_data(50, 10);
        let model = fit_model(&ModelSpec::default_ensemble(), &x, &y, 13).unwrap();
        let json = model_to_json(&model);
        let back = model_from_json(&json).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn fits_are_deterministic_per_seed() {
        let (x, y) = toy_data(80, 12);
        let spec = ModelSpec::default_ensemble();
        let a = fit_model(&spec, &x, &y, 99).unwrap();
        let b = fit_model(&spec, &x, &y, 99).unwrap();
        assert_eq!(model_to_json(&a), model_to_json(&b));
    }

    #[test]
    fn tree_predictions_invariant_under_monotone_feature_transform() {
        let (x, y) = toy_data(70, 13);
        let transform = |v: f64| v.powi(3) + 2.0 * v; // strictly increasing
        let rows_t: Vec<Vec<f64>> = (0..x.n_rows)
            .map(|r| x.row(r).iter().map(|&v| transform(v)).collect())
            .collect();
        let xt = FeatureMatrix::from_numeric(&["a", "b"], &rows_t).unwrap();

        for spec in [
            ModelSpec::RandomForest(ForestConfig {
                n_trees: 20,
                ..Default::default()
            }),
            ModelSpec::GradientBoosting(BoostingConfig {
                n_trees: 20,
                ..Default::default()
            }),
        ] {
            let m = fit_model(&spec, &x, &y, 21).unwrap();
            let mt = fit_model(&spec, &xt, &y, 21).unwrap();
            for r in 0..x.n_rows {
                let label = m.predict_row(x.row(r)) > 0.5;
                let label_t = mt.predict_row(xt.row(r)) > 0.5;
                assert_eq!(label, label_t, "row {r}");
            }
        }
    }
}
