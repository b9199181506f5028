//! Gradient-boosted trees with logistic loss: stagewise regression trees
//! fitted to the negative gradient, raw score init + lr * sum of tree
//! outputs, probability through the logistic link.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};
use crate::models::tree::{fit_cart, CartConfig, CartTree, SplitCriterion};
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        BoostingConfig {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel {
    pub feature_names: Vec<String>,
    pub init_score: f64,
    pub trees: Vec<CartTree>,
    pub config: BoostingConfig,
    /// mean logistic training loss after each stage (stage 0 = init only)
    pub training_loss: Vec<f64>,
}

impl GradientBoostingModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.init_score
            + self.config.learning_rate
                * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }
}

fn mean_logistic_loss(scores: &[f64], y: &[u8]) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(y)
        .map(|(&f, &label)| {
            if label == 1 {
                ln1p_exp(-f)
            } else {
                ln1p_exp(f)
            }
        })
        .sum::<f64>()
        / n
}

fn ln1p_exp(x: f64) -> f64 {
    // log(1 + exp(x)) without overflow
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn fit_gradient_boosting(
    x: &FeatureMatrix,
    y: &[u8],
    config: &BoostingConfig,
    _seed: u64,
) -> Result<GradientBoostingModel> {
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch(y.len(), x.n_rows));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassLabels);
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("learning rate must be positive".into()));
    }
    let n = x.n_rows;
    let p_bar = pos as f64 / n as f64;
    let init_score = logit(p_bar);

    let cart_cfg = CartConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        criterion: SplitCriterion::SquaredError,
    };

    let mut scores = vec![init_score; n];
    let mut training_loss = Vec::with_capacity(config.n_trees + 1);
    training_loss.push(mean_logistic_loss(&scores, y));
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut residuals = vec![0.0; n];
    for _ in 0..config.n_trees {
        for r in 0..n {
            residuals[r] = y[r] as f64 - sigmoid(scores[r]);
        }
        let tree = fit_cart(x, &residuals, &cart_cfg);
        for r in 0..n {
            scores[r] += config.learning_rate * tree.predict(x.row(r));
        }
        trees.push(tree);
        training_loss.push(mean_logistic_loss(&scores, y));
    }

    Ok(GradientBoostingModel {
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        init_score,
        trees,
        config: *config,
        training_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_auc;
    use approx::assert_relative_eq;

    fn threshold_data() -> (FeatureMatrix, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (-20..20).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<u8> = (-20..20).map(|i| u8::from(i >= 0)).collect();
        (FeatureMatrix::from_numeric(&["x"], &rows).unwrap(), y)
    }

    #[test]
    fn zero_trees_is_the_prior() {
        let (x, y) = threshold_data();
        let cfg = BoostingConfig {
            n_trees: 0,
            ..Default::default()
        };
        let model = fit_gradient_boosting(&x, &y, &cfg, 0).unwrap();
        assert_relative_eq!(model.raw_score(x.row(0)), logit(0.5), epsilon = 1e-12);
    }

    #[test]
    fn training_loss_non_increasing() {
        let (x, y) = threshold_data();
        let model = fit_gradient_boosting(&x, &y, &BoostingConfig::default(), 0).unwrap();
        for w in model.training_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn threshold_data_reaches_perfect_training_auc() {
        let (x, y) = threshold_data();
        let cfg = BoostingConfig {
            n_trees: 50,
            ..Default::default()
        };
        let model = fit_gradient_boosting(&x, &y, &cfg, 0).unwrap();
        let scores: Vec<f64> = (0..x.n_rows).map(|r| model.predict_row(x.row(r))).collect();
        let roc = roc_auc(&scores, &y).unwrap();
        assert_eq!(roc.auc, 1.0);
    }
}
