//! Random forest: bootstrapped Gini trees with per-split feature
//! subsampling; the predicted probability is the mean of the per-tree leaf
//! class frequencies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::tree::{fit_cart_on_rows, CartConfig, CartTree, SplitCriterion};
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// all features at every split
    All,
    /// floor(sqrt(p)) features per split
    Sqrt,
    /// an explicit per-split feature count
    Count(usize),
}

impl FeatureSubsample {
    fn m_try(&self, p: usize) -> usize {
        match self {
            FeatureSubsample::All => p,
            FeatureSubsample::Sqrt => (p as f64).sqrt().floor().max(1.0) as usize,
            FeatureSubsample::Count(m) => (*m).clamp(1, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        // conservative defaults: 100 trees, depth 6, sqrt feature subsampling
        ForestConfig {
            n_trees: 100,
            max_depth: 6,
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub feature_names: Vec<String>,
    pub trees: Vec<CartTree>,
    pub config: ForestConfig,
    pub seed: u64,
    /// accuracy on out-of-bag rows at the 0.5 cut, when bootstrapping
    pub oob_accuracy: Option<f64>,
}

impl RandomForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }
}

pub fn fit_random_forest(
    x: &FeatureMatrix,
    y: &[u8],
    config: &ForestConfig,
    seed: u64,
) -> Result<RandomForestModel> {
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch(y.len(), x.n_rows));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassLabels);
    }
    let n = x.n_rows;
    let yv: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let cart_cfg = CartConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        criterion: SplitCriterion::Gini,
    };
    let m_try = config.feature_subsample.m_try(x.n_cols());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for _ in 0..config.n_trees {
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree = fit_cart_on_rows(x, &yv, &rows, &cart_cfg, m_try, Some(&mut rng));
        if config.bootstrap {
            let mut in_bag = vec![false; n];
            for &r in &rows {
                in_bag[r] = true;
            }
            for r in 0..n {
                if !in_bag[r] {
                    oob_sum[r] += tree.predict(x.row(r));
                    oob_count[r] += 1;
                }
            }
        }
        trees.push(tree);
    }

    let oob_accuracy = if config.bootstrap {
        let mut correct = 0usize;
        let mut seen = 0usize;
        for r in 0..n {
            if oob_count[r] > 0 {
                seen += 1;
                let p = oob_sum[r] / oob_count[r] as f64;
                if (p > 0.5) as u8 == y[r] {
                    correct += 1;
                }
            }
        }
        (seen > 0).then(|| correct as f64 / seen as f64)
    } else {
        None
    };

    Ok(RandomForestModel {
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        trees,
        config: *config,
        seed,
        oob_accuracy,
    })
}
