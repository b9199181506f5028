//! L1-regularized logistic regression via cyclic coordinate descent with
//! soft-thresholding. The objective is the mean negative log-likelihood
//! plus `lambda * ||coefficients||_1`; the intercept is unpenalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, sigmoid};
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// max absolute coefficient change in the final sweep
    pub final_max_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoLogisticModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// population SD of each feature at fit time, for importance reporting
    pub feature_sd: Vec<f64>,
    pub convergence: ConvergenceReport,
}

impl LassoLogisticModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let f = self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>();
        sigmoid(f)
    }

    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }
}

pub const LASSO_DEFAULT_TOL: f64 = 1e-6;
pub const LASSO_DEFAULT_MAX_ITER: usize = 10_000;

fn check_inputs(x: &FeatureMatrix, y: &[u8]) -> Result<()> {
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch(y.len(), x.n_rows));
    }
    if x.n_rows == 0 {
        return Err(Error::EmptyCohort);
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassLabels);
    }
    for c in 0..x.n_cols() {
        for r in 0..x.n_rows {
            if !x.get(r, c).is_finite() {
                return Err(Error::NonFiniteValue(x.columns[c].name.clone()));
            }
        }
    }
    Ok(())
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Fit by cyclic coordinate descent. Each coordinate takes a proximal step
/// under the logistic curvature bound `0.25 * mean(x_j^2)`; a fixed point
/// of that update satisfies the soft-thresholding optimality conditions.
/// Convergence is declared when the largest coefficient move in a sweep
/// drops below `tol`; hitting `max_iter` is reported, not fatal.
pub fn fit_lasso_logistic(
    x: &FeatureMatrix,
    y: &[u8],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoLogisticModel> {
    check_inputs(x, y)?;
    if lambda < 0.0 {
        return Err(Error::InvalidParameter("lambda must be >= 0".into()));
    }
    let n = x.n_rows;
    let p = x.n_cols();
    let nf = n as f64;
    let yv: Vec<f64> = y.iter().map(|&l| l as f64).collect();

    // curvature bounds per coordinate
    let mut h = vec![0.0; p];
    for j in 0..p {
        h[j] = 0.25 * (0..n).map(|r| x.get(r, j).powi(2)).sum::<f64>() / nf;
    }

    let mut beta = vec![0.0; p];
    let mut intercept = 0.0;
    let mut linear = vec![0.0; n];
    let mut iterations = 0;
    let mut max_delta = f64::INFINITY;

    while iterations < max_iter && max_delta >= tol {
        iterations += 1;
        max_delta = 0.0;

        // intercept (unpenalized Newton-bound step)
        let grad0 = (0..n).map(|r| sigmoid(linear[r]) - yv[r]).sum::<f64>() / nf;
        let delta0 = -grad0 / 0.25;
        if delta0 != 0.0 {
            intercept += delta0;
            for l in linear.iter_mut() {
                *l += delta0;
            }
            max_delta = max_delta.max(delta0.abs());
        }

        for j in 0..p {
            if h[j] == 0.0 {
                continue; // all-zero column stays out of the model
            }
            let grad = (0..n)
                .map(|r| x.get(r, j) * (sigmoid(linear[r]) - yv[r]))
                .sum::<f64>()
                / nf;
            let candidate = beta[j] - grad / h[j];
            let updated = soft_threshold(candidate, lambda / h[j]);
            let delta = updated - beta[j];
            if delta != 0.0 {
                beta[j] = updated;
                for r in 0..n {
                    linear[r] += delta * x.get(r, j);
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
    }

    let feature_sd = (0..p).map(|j| math::population_sd(&x.column(j))).collect();
    Ok(LassoLogisticModel {
        feature_names: x.columns.iter().map(|c| c.name.clone()).collect(),
        coefficients: beta,
        intercept,
        lambda,
        feature_sd,
        convergence: ConvergenceReport {
            iterations,
            converged: max_delta < tol,
            final_max_delta: max_delta,
        },
    })
}

/// Penalized objective: mean negative log-likelihood + lambda * l1(beta).
pub fn lasso_objective(x: &FeatureMatrix, y: &[u8], beta: &[f64], intercept: f64, lambda: f64) -> f64 {
    let n = x.n_rows;
    let mut nll = 0.0;
    for r in 0..n {
        let f = intercept
            + x.row(r)
                .iter()
                .zip(beta)
                .map(|(v, b)| v * b)
                .sum::<f64>();
        // -log likelihood of a Bernoulli with logit f
        let ll = if y[r] == 1 {
            -ln_sigmoid(f)
        } else {
            -ln_sigmoid(-f)
        };
        nll += ll;
    }
    nll / n as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn ln_sigmoid(x: f64) -> f64 {
    // numerically stable log(sigmoid(x))
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

/// Largest subgradient-condition violation at the current coefficients:
/// inactive coordinates need |gradient| <= lambda, active ones need
/// gradient + lambda * sign(beta) = 0.
pub fn kkt_residual(x: &FeatureMatrix, y: &[u8], model: &LassoLogisticModel) -> f64 {
    let n = x.n_rows;
    let nf = n as f64;
    let mut linear = vec![model.intercept; n];
    for r in 0..n {
        linear[r] += x
            .row(r)
            .iter()
            .zip(&model.coefficients)
            .map(|(v, b)| v * b)
            .sum::<f64>();
    }
    let mut worst: f64 = (0..n)
        .map(|r| sigmoid(linear[r]) - y[r] as f64)
        .sum::<f64>()
        .abs()
        / nf;
    for j in 0..x.n_cols() {
        let grad = (0..n)
            .map(|r| x.get(r, j) * (sigmoid(linear[r]) - y[r] as f64))
            .sum::<f64>()
            / nf;
        let violation = if model.coefficients[j] == 0.0 {
            (grad.abs() - model.lambda).max(0.0)
        } else {
            (grad + model.lambda * model.coefficients[j].signum()).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

/// Smallest penalty that zeroes every coefficient.
pub fn lambda_max(x: &FeatureMatrix, y: &[u8]) -> f64 {
    let n = x.n_rows as f64;
    let ybar = y.iter().map(|&l| l as f64).sum::<f64>() / n;
    (0..x.n_cols())
        .map(|j| {
            (0..x.n_rows)
                .map(|r| x.get(r, j) * (ybar - y[r] as f64))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

/// Logarithmic grid of 30 penalties from `lambda_max` down four decades.
pub fn lambda_grid(x: &FeatureMatrix, y: &[u8]) -> Vec<f64> {
    let top = lambda_max(x, y).max(1e-12);
    let n = 30;
    (0..n)
        .map(|i| top * 10f64.powf(-4.0 * i as f64 / (n - 1) as f64))
        .collect()
}
