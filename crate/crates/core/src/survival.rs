//! Survival statistics: Kaplan-Meier product-limit curves with Greenwood
//! variance, the log-rank test, Cox proportional hazards with Breslow tie
//! handling, Harrell's concordance index and score-based risk grouping.

pub mod cox;

pub use cox::{fit_cox, partial_log_likelihood, CoxModel, CoxTerm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::FeatureMatrix;

/// Right-censored survival data: `event = 1` marks an observed event,
/// `event = 0` a censored follow-up time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub time: Vec<f64>,
    pub event: Vec<u8>,
    pub covariates: Option<FeatureMatrix>,
    pub group: Option<Vec<String>>,
}

impl SurvivalDataset {
    pub fn new(time: Vec<f64>, event: Vec<u8>) -> Result<Self> {
        if time.len() != event.len() {
            return Err(Error::LengthMismatch(time.len(), event.len()));
        }
        if time.is_empty() {
            return Err(Error::EmptyCohort);
        }
        for (i, (&t, &e)) in time.iter().zip(&event).enumerate() {
            if !(t >= 0.0) {
                return Err(Error::NegativeTime);
            }
            if e > 1 {
                return Err(Error::InvalidParameter(format!(
                    "event indicator {e} at subject {i}"
                )));
            }
            if t == 0.0 && e == 1 {
                return Err(Error::EventAtTimeZero(i.to_string()));
            }
        }
        Ok(SurvivalDataset {
            time,
            event,
            covariates: None,
            group: None,
        })
    }

    pub fn with_covariates(mut self, covariates: FeatureMatrix) -> Result<Self> {
        if covariates.n_rows != self.time.len() {
            return Err(Error::LengthMismatch(covariates.n_rows, self.time.len()));
        }
        self.covariates = Some(covariates);
        Ok(self)
    }

    pub fn with_groups(mut self, group: Vec<String>) -> Result<Self> {
        if group.len() != self.time.len() {
            return Err(Error::LengthMismatch(group.len(), self.time.len()));
        }
        self.group = Some(group);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// One step of a Kaplan-Meier curve, placed at an event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
    pub n_at_risk: usize,
    pub n_events: usize,
    pub greenwood_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub steps: Vec<KmStep>,
    /// earliest time with S <= 0.5; None if the curve never reaches 0.5
    pub median_survival: Option<f64>,
    pub n_subjects: usize,
}

impl KmCurve {
    /// Step-function value of S at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for step in &self.steps {
            if step.time <= t {
                s = step.survival;
            } else {
                break;
            }
        }
        s
    }
}

/// Product-limit estimator S(t) = prod_{t_i <= t} (1 - d_i/n_i) over the
/// distinct event times, with Greenwood's variance at each step.
pub fn kaplan_meier(data: &SurvivalDataset) -> Result<KmCurve> {
    if data.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| data.time[i].partial_cmp(&data.time[j]).unwrap());

    let mut steps = Vec::new();
    let mut survival = 1.0;
    let mut greenwood_sum = 0.0;
    let mut at_risk = n;
    let mut i = 0;
    while i < n {
        let t = data.time[order[i]];
        let mut events = 0usize;
        let mut leaving = 0usize;
        while i < n && data.time[order[i]] == t {
            leaving += 1;
            if data.event[order[i]] == 1 {
                events += 1;
            }
            i += 1;
        }
        if events > 0 {
            let d = events as f64;
            let r = at_risk as f64;
            survival *= 1.0 - d / r;
            greenwood_sum += d / (r * (r - d)).max(f64::MIN_POSITIVE);
            steps.push(KmStep {
                time: t,
                survival,
                n_at_risk: at_risk,
                n_events: events,
                greenwood_variance: survival * survival * greenwood_sum,
            });
        }
        at_risk -= leaving;
    }
    let median_survival = steps
        .iter()
        .find(|s| s.survival <= 0.5)
        .map(|s| s.time);
    Ok(KmCurve {
        steps,
        median_survival,
        n_subjects: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub chi_square: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    /// per-group (observed events, expected events)
    pub observed_expected: Vec<(String, f64, f64)>,
}

/// Log-rank test across two or more groups: the observed-minus-expected
/// statistic sum_g (O_g - E_g)^2 / E_g over pooled event times, referred to
/// a chi-squared distribution with (groups - 1) degrees of freedom.
pub fn log_rank_test(data: &SurvivalDataset) -> Result<LogRankResult> {
    let groups = data
        .group
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("log-rank needs group labels".into()))?;
    let mut names: Vec<String> = groups.clone();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(Error::InvalidParameter(
            "log-rank needs at least two non-empty groups".into(),
        ));
    }
    let g_index = |g: &str| names.iter().position(|n| n == g).unwrap();

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| data.time[i].partial_cmp(&data.time[j]).unwrap());

    let mut at_risk = vec![0f64; names.len()];
    for g in groups {
        at_risk[g_index(g)] += 1.0;
    }
    let mut observed = vec![0f64; names.len()];
    let mut expected = vec![0f64; names.len()];

    let mut i = 0;
    while i < n {
        let t = data.time[order[i]];
        let mut events_by_group = vec![0f64; names.len()];
        let mut leaving_by_group = vec![0f64; names.len()];
        let mut d_total = 0.0;
        while i < n && data.time[order[i]] == t {
            let gi = g_index(&groups[order[i]]);
            leaving_by_group[gi] += 1.0;
            if data.event[order[i]] == 1 {
                events_by_group[gi] += 1.0;
                d_total += 1.0;
            }
            i += 1;
        }
        let r_total: f64 = at_risk.iter().sum();
        if d_total > 0.0 && r_total > 0.0 {
            for g in 0..names.len() {
                observed[g] += events_by_group[g];
                expected[g] += at_risk[g] * d_total / r_total;
            }
        }
        for g in 0..names.len() {
            at_risk[g] -= leaving_by_group[g];
        }
    }

    let mut chi_square = 0.0;
    for g in 0..names.len() {
        if expected[g] > 0.0 {
            chi_square += (observed[g] - expected[g]).powi(2) / expected[g];
        }
    }
    let df = names.len() - 1;
    Ok(LogRankResult {
        chi_square,
        p_value: math::chi_squared_sf(chi_square, df as f64),
        degrees_of_freedom: df,
        observed_expected: names
            .into_iter()
            .enumerate()
            .map(|(g, name)| (name, observed[g], expected[g]))
            .collect(),
    })
}

/// Harrell's C over usable pairs: a pair is usable when the two times
/// differ and the shorter time is an observed event; score ties count 0.5.
/// Higher scores must indicate higher risk (earlier events).
pub fn concordance_index(scores: &[f64], data: &SurvivalDataset) -> Result<f64> {
    if scores.len() != data.len() {
        return Err(Error::LengthMismatch(scores.len(), data.len()));
    }
    let n = data.len();
    let mut usable = 0u64;
    let mut concordant = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let (early, late) = if data.time[i] < data.time[j] {
                (i, j)
            } else if data.time[j] < data.time[i] {
                (j, i)
            } else {
                continue;
            };
            if data.event[early] != 1 {
                continue;
            }
            usable += 1;
            if scores[early] > scores[late] {
                concordant += 1.0;
            } else if scores[early] == scores[late] {
                concordant += 0.5;
            }
        }
    }
    if usable == 0 {
        return Err(Error::NoUsablePairs);
    }
    Ok(concordant / usable as f64)
}

/// Tertile-style risk grouping against explicit (lower, upper) cutoffs;
/// a score exactly at a cutoff goes to the higher-risk side.
pub fn risk_group_stratification(
    scores: &[f64],
    cutoffs: (f64, f64),
) -> Result<Vec<crate::preprocess::RiskTertile>> {
    let (lower, upper) = cutoffs;
    if !(lower <= upper) {
        return Err(Error::UnorderedCutoffs);
    }
    use crate::preprocess::RiskTertile::*;
    Ok(scores
        .iter()
        .map(|&s| {
            if s >= upper {
                High
            } else if s >= lower {
                Medium
            } else {
                Low
            }
        })
        .collect())
}
