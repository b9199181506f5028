//! CART binary trees: Gini-impurity splits for classification, squared
//! error for the regression trees used as boosting base learners. Split
//! ties break toward the lower feature index, then the lower threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub root: TreeNode,
    pub criterion: SplitCriterion,
    /// raw impurity decrease accumulated per feature during fitting
    pub importances: Vec<f64>,
}

impl CartTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.root.predict(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub criterion: SplitCriterion,
}

/// Candidate split chosen for one node.
struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn node_impurity(criterion: SplitCriterion, sum: f64, sum_sq: f64, n: f64) -> f64 {
    match criterion {
        // y in {0,1}: gini = 2 p (1-p)
        SplitCriterion::Gini => {
            let p = sum / n;
            2.0 * p * (1.0 - p)
        }
        // mean squared deviation
        SplitCriterion::SquaredError => sum_sq / n - (sum / n).powi(2),
    }
}

/// Search every (feature, threshold) candidate over the node rows;
/// `features` restricts the candidate features (random forests pass a
/// random subset). Returns None when no split improves impurity.
fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    cfg: &CartConfig,
) -> Option<BestSplit> {
    let n = rows.len() as f64;
    let total_sum: f64 = rows.iter().map(|&r| y[r]).sum();
    let total_sq: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
    let parent = node_impurity(cfg.criterion, total_sum, total_sq, n);

    let mut best: Option<BestSplit> = None;
    let mut column: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for &feature in features {
        column.clear();
        column.extend(rows.iter().map(|&r| (x.get(r, feature), y[r])));
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for i in 0..rows.len() - 1 {
            left_sum += column[i].1;
            left_sq += column[i].1 * column[i].1;
            if column[i].0 == column[i + 1].0 {
                continue; // no boundary between equal values
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            if (nl as usize) < cfg.min_samples_leaf || (nr as usize) < cfg.min_samples_leaf {
                continue;
            }
            let il = node_impurity(cfg.criterion, left_sum, left_sq, nl);
            let ir = node_impurity(
                cfg.criterion,
                total_sum - left_sum,
                total_sq - left_sq,
                nr,
            );
            let gain = parent - (nl / n) * il - (nr / n) * ir;
            if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold: 0.5 * (column[i].0 + column[i + 1].0),
                    gain,
                });
            }
        }
    }
    best
}

fn grow(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    depth: usize,
    cfg: &CartConfig,
    feature_pool: &[usize],
    m_try: usize,
    rng: &mut Option<&mut ChaCha8Rng>,
    importances: &mut [f64],
) -> TreeNode {
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
    if depth >= cfg.max_depth || pure || n < 2 * cfg.min_samples_leaf {
        return TreeNode::Leaf { value: mean, n };
    }

    // draw the candidate feature subset for this node
    let subset_storage;
    let features: &[usize] = if m_try < feature_pool.len() {
        let rng = rng.as_mut().expect("feature subsampling needs an rng");
        let mut pool = feature_pool.to_vec();
        for i in 0..m_try {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(m_try);
        pool.sort_unstable();
        subset_storage = pool;
        &subset_storage
    } else {
        feature_pool
    };

    match best_split(x, y, rows, features, cfg) {
        None => TreeNode::Leaf { value: mean, n },
        Some(split) => {
            importances[split.feature] += split.gain * n as f64;
            let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
            for &r in rows {
                if x.get(r, split.feature) <= split.threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            let left = grow(x, y, &left_rows, depth + 1, cfg, feature_pool, m_try, rng, importances);
            let right = grow(x, y, &right_rows, depth + 1, cfg, feature_pool, m_try, rng, importances);
            TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Fit a tree on the given rows. `m_try` features are drawn per split when
/// it is smaller than the feature count (random-forest mode).
pub fn fit_cart_on_rows(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    cfg: &CartConfig,
    m_try: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> CartTree {
    let feature_pool: Vec<usize> = (0..x.n_cols()).collect();
    let mut importances = vec![0.0; x.n_cols()];
    let root = grow(
        x,
        y,
        rows,
        0,
        cfg,
        &feature_pool,
        m_try.max(1).min(feature_pool.len()),
        &mut rng,
        &mut importances,
    );
    CartTree {
        root,
        criterion: cfg.criterion,
        importances,
    }
}

/// Fit a CART on every row with all features available at each split.
pub fn fit_cart(x: &FeatureMatrix, y: &[f64], cfg: &CartConfig) -> CartTree {
    let rows: Vec<usize> = (0..x.n_rows).collect();
    fit_cart_on_rows(x, y, &rows, cfg, x.n_cols(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let names: Vec<String> = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        FeatureMatrix::from_numeric(&refs, rows).unwrap()
    }

    fn cfg(max_depth: usize) -> CartConfig {
        CartConfig {
            max_depth,
            min_samples_leaf: 1,
            criterion: SplitCriterion::Gini,
        }
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let tree = fit_cart(&x, &[1.0, 1.0, 1.0], &cfg(5));
        assert!(matches!(tree.root, TreeNode::Leaf { value, .. } if value == 1.0));
    }

    #[test]
    fn stump_cannot_learn_xor() {
        let x = matrix(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ]);
        let y = [0.0, 1.0, 1.0, 0.0];
        let stump = fit_cart(&x, &y, &cfg(1));
        let correct = (0..4)
            .filter(|&r| (stump.predict(x.row(r)) > 0.5) as u8 as f64 == y[r])
            .count();
        assert_eq!(correct, 2, "a depth-1 stump should sit at chance on XOR");

        // depth 2 solves it exactly
        let deep = fit_cart(&x, &y, &cfg(2));
        for r in 0..4 {
            assert_eq!(deep.predict(x.row(r)), y[r]);
        }
    }

    #[test]
    fn threshold_split_found_by_enumeration() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (-10..10).map(|i| f64::from(i >= 0)).collect();
        let x = matrix(&rows);
        let tree = fit_cart(&x, &y, &cfg(3));
        match &tree.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, -0.5);
            }
            _ => panic!("expected a split"),
        }
        for r in 0..x.n_rows {
            assert_eq!(tree.predict(x.row(r)), y[r]);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 40) as f64 / 16777216.0
        };
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![next(), next(), next()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| f64::from(r[0] + r[1] > 1.0)).collect();
        let x = matrix(&rows);
        let tree = fit_cart(&x, &y, &cfg(4));
        assert!(tree.root.depth() <= 4);
    }
}
