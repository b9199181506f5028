//! Decision curve analysis: net benefit across threshold probabilities,
//! treat-all / treat-none reference strategies and treatment-efficiency
//! summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::threshold_metrics;

/// Net benefit of classifying "score >= pt" as positive:
/// `TP/n - (FP/n) * pt / (1 - pt)`.
pub fn net_benefit(scores: &[f64], labels: &[u8], pt: f64) -> Result<f64> {
    if !(pt > 0.0 && pt < 1.0) {
        return Err(Error::BadThreshold(pt));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = threshold_metrics(scores, labels, pt)?;
    let n = scores.len() as f64;
    Ok(m.confusion.tp as f64 / n - (m.confusion.fp as f64 / n) * pt / (1.0 - pt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCurve {
    pub thresholds: Vec<f64>,
    pub net_benefit_model: Vec<f64>,
    pub net_benefit_treat_all: Vec<f64>,
    pub net_benefit_treat_none: Vec<f64>,
    pub prevalence: f64,
}

/// Default threshold grid: 0.05 to 0.95 in steps of 0.05.
pub fn default_pt_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Model, treat-all and treat-none net-benefit curves over an ascending
/// threshold grid.
pub fn decision_curve(scores: &[f64], labels: &[u8], pt_grid: &[f64]) -> Result<DecisionCurve> {
    if pt_grid.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    for w in pt_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter("threshold grid must ascend".into()));
        }
    }
    let n = labels.len() as f64;
    let prevalence = labels.iter().filter(|&&l| l == 1).count() as f64 / n;
    let mut model = Vec::with_capacity(pt_grid.len());
    let mut all = Vec::with_capacity(pt_grid.len());
    for &pt in pt_grid {
        model.push(net_benefit(scores, labels, pt)?);
        all.push(prevalence - (1.0 - prevalence) * pt / (1.0 - pt));
    }
    Ok(DecisionCurve {
        thresholds: pt_grid.to_vec(),
        net_benefit_model: model,
        net_benefit_treat_all: all,
        net_benefit_treat_none: vec![0.0; pt_grid.len()],
        prevalence,
    })
}

/// Per-1000-patient treatment bookkeeping at one threshold. Efficiency is
/// TP/(TP+FP) and is `None` when nobody is predicted positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEfficiency {
    pub threshold: f64,
    pub treated_per_1000: f64,
    pub beneficial_per_1000: f64,
    pub unnecessary_per_1000: f64,
    pub efficiency: Option<f64>,
}

pub fn treatment_efficiency(scores: &[f64], labels: &[u8], pt: f64) -> Result<TreatmentEfficiency> {
    if !(pt > 0.0 && pt < 1.0) {
        return Err(Error::BadThreshold(pt));
    }
    let m = threshold_metrics(scores, labels, pt)?;
    let n = scores.len() as f64;
    let tp = m.confusion.tp as f64;
    let fp = m.confusion.fp as f64;
    Ok(TreatmentEfficiency {
        threshold: pt,
        treated_per_1000: 1000.0 * (tp + fp) / n,
        beneficial_per_1000: 1000.0 * tp / n,
        unnecessary_per_1000: 1000.0 * fp / n,
        efficiency: (tp + fp > 0.0).then(|| tp / (tp + fp)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn treat_none_identity() {
        // nobody predicted positive: net benefit is exactly zero
        let scores = [0.1, 0.2, 0.3];
        let labels = [1, 0, 1];
        assert_eq!(net_benefit(&scores, &labels, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn everyone_positive_hand_value() {
        // n=10, 4 positives, all predicted positive at pt = 0.5
        let scores = [0.9; 10];
        let labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let nb = net_benefit(&scores, &labels, 0.5).unwrap();
        assert_relative_eq!(nb, 0.4 - 0.6, epsilon = 1e-12);
    }

    #[test]
    fn perfect_classifier_reaches_prevalence() {
        let scores = [0.99, 0.98, 0.01, 0.02, 0.01];
        let labels = [1, 1, 0, 0, 0];
        for pt in [0.1, 0.3, 0.5, 0.8] {
            assert_relative_eq!(net_benefit(&scores, &labels, pt).unwrap(), 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn treat_all_crosses_zero_at_prevalence() {
        let labels: Vec<u8> = (0..10).map(|i| u8::from(i < 4)).collect(); // prevalence 0.4
        let scores = vec![0.5; 10];
        let curve = decision_curve(&scores, &labels, &[0.2, 0.4, 0.6]).unwrap();
        assert!(curve.net_benefit_treat_all[1].abs() < 1e-12);
        // strictly decreasing in pt
        assert!(curve.net_benefit_treat_all[0] > curve.net_benefit_treat_all[1]);
        assert!(curve.net_benefit_treat_all[1] > curve.net_benefit_treat_all[2]);
        assert!(curve.net_benefit_treat_none.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn efficiency_is_ppv() {
        // 35 true positives and 15 false positives per 1000 evaluated
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..35 {
            scores.push(0.9);
            labels.push(1);
        }
        for _ in 0..15 {
            scores.push(0.9);
            labels.push(0);
        }
        for i in 0..950 {
            scores.push(0.1);
            labels.push(u8::from(i % 3 == 0));
        }
        let te = treatment_efficiency(&scores, &labels, 0.8).unwrap();
        assert_relative_eq!(te.treated_per_1000, 50.0, epsilon = 1e-12);
        assert_relative_eq!(te.beneficial_per_1000, 35.0, epsilon = 1e-12);
        assert_relative_eq!(te.unnecessary_per_1000, 15.0, epsilon = 1e-12);
        assert_relative_eq!(te.efficiency.unwrap(), 0.70, epsilon = 1e-12);

        let m = threshold_metrics(&scores, &labels, 0.8).unwrap();
        assert_relative_eq!(te.efficiency.unwrap(), m.ppv.unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn all_negative_predictions_flag_efficiency() {
        let te = treatment_efficiency(&[0.1, 0.2], &[1, 0], 0.9).unwrap();
        assert_eq!(te.efficiency, None);
        assert_eq!(te.treated_per_1000, 0.0);
    }

    #[test]
    fn model_net_benefit_bounded_by_prevalence() {
        let scores: Vec<f64> = (0..60).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from((i * 13) % 4 == 0)).collect();
        let prevalence = labels.iter().filter(|&&l| l == 1).count() as f64 / 60.0;
        let curve = decision_curve(&scores, &labels, &default_pt_grid()).unwrap();
        for &nb in &curve.net_benefit_model {
            assert!(nb <= prevalence + 1e-12);
        }
    }

    #[test]
    fn bad_threshold_rejected() {
        assert!(matches!(
            net_benefit(&[0.5], &[1], 0.0),
            Err(Error::BadThreshold(_))
        ));
        assert!(matches!(
            net_benefit(&[0.5], &[1], 1.0),
            Err(Error::BadThreshold(_))
        ));
    }
}
