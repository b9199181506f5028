//! Small-sample validation statistics: the Mann-Whitney U test (exact
//! enumeration when feasible, otherwise a tie-corrected normal
//! approximation) and the 2x2 odds ratio with the Haldane-Anscombe
//! correction. All p-values are two-sided.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// count of (a, b) pairs with a > b, ties counted 0.5
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Exact null distribution of U for sample sizes (n1, n2): the number of
/// rank arrangements at each U value equals the number of partitions of U
/// into at most n1 parts, each at most n2, via
/// `N(i, m, u) = N(i, m-1, u) + N(i-1, m, u-m)`.
fn exact_u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    let max_u = n1 * n2;
    // rolling over m: counts[i][u] = N(i, m, u)
    let mut counts = vec![vec![0.0f64; max_u + 1]; n1 + 1];
    for row in counts.iter_mut() {
        row[0] = 1.0; // m = 0: only the empty sum
    }
    for m in 1..=n2 {
        for i in 1..=n1 {
            for u in m..=max_u {
                let carry = counts[i - 1][u - m];
                counts[i][u] += carry;
            }
        }
    }
    counts.swap_remove(n1)
}

/// Mann-Whitney U: `U = #{(a, b) : a > b} + 0.5 #ties`. Exact two-sided
/// p-value by enumeration when `n1 * n2 <= 400` and the pooled sample is
/// tie-free; otherwise a tie-corrected normal approximation with
/// continuity correction.
pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64]) -> Result<MannWhitneyResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::EmptySample);
    }
    let n1 = sample_a.len();
    let n2 = sample_b.len();
    let mut u = 0.0;
    for &a in sample_a {
        for &b in sample_b {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }

    let mut pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        if j > i {
            tie_sizes.push((j - i + 1) as f64);
        }
        i = j + 1;
    }
    let has_ties = !tie_sizes.is_empty();

    if !has_ties && n1 * n2 <= 400 {
        let dist = exact_u_distribution(n1, n2);
        let total: f64 = dist.iter().sum();
        let ui = u as usize;
        let lower: f64 = dist[..=ui].iter().sum::<f64>() / total;
        let upper: f64 = dist[ui..].iter().sum::<f64>() / total;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(MannWhitneyResult {
            u_statistic: u,
            p_value: p,
            method: PValueMethod::Exact,
        });
    }

    let n = (n1 + n2) as f64;
    let mu = n1 as f64 * n2 as f64 / 2.0;
    let tie_term: f64 = tie_sizes.iter().map(|t| t * t * t - t).sum();
    let sigma2 = n1 as f64 * n2 as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if sigma2 <= 0.0 {
        1.0
    } else {
        // continuity correction of 0.5 toward the mean
        let z = (u - mu).abs() - 0.5;
        math::two_sided_normal_p(z.max(0.0) / sigma2.sqrt())
    };
    Ok(MannWhitneyResult {
        u_statistic: u,
        p_value,
        method: PValueMethod::NormalApproximation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioResult {
    pub odds_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Haldane-Anscombe +0.5 applied because of a zero cell
    pub correction_applied: bool,
}

/// Odds ratio of a 2x2 table `(a, b; c, d)`: `(a*d)/(b*c)`, with the
/// Haldane-Anscombe +0.5 correction applied to every cell when any is
/// zero, and a 95% CI from the log-OR normal approximation.
pub fn odds_ratio_2x2(a: u64, b: u64, c: u64, d: u64) -> Result<OddsRatioResult> {
    if a + b + c + d == 0 {
        return Err(Error::AllZeroTable);
    }
    let correction_applied = a == 0 || b == 0 || c == 0 || d == 0;
    let adj = if correction_applied { 0.5 } else { 0.0 };
    let (af, bf, cf, df) = (
        a as f64 + adj,
        b as f64 + adj,
        c as f64 + adj,
        d as f64 + adj,
    );
    let odds_ratio = (af * df) / (bf * cf);
    let se = (1.0 / af + 1.0 / bf + 1.0 / cf + 1.0 / df).sqrt();
    let log_or = odds_ratio.ln();
    let z = 1.959963984540054;
    Ok(OddsRatioResult {
        odds_ratio,
        ci_lower: (log_or - z * se).exp(),
        ci_upper: (log_or + z * se).exp(),
        correction_applied,
    })
}
