//! Cox proportional hazards: Newton-Raphson maximization of the Breslow
//! partial log-likelihood with step-halving, Wald confidence intervals from
//! the inverse observed information, and a training concordance index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::survival::{concordance_index, SurvivalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxTerm {
    pub name: String,
    pub coefficient: f64,
    pub hazard_ratio: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxConvergence {
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
    /// |beta| diverged past the separation guard
    pub separation_detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub terms: Vec<CoxTerm>,
    pub c_index: f64,
    pub convergence: CoxConvergence,
}

impl CoxModel {
    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.terms)
            .map(|(x, t)| x * t.coefficient)
            .sum()
    }

    /// Aligned-text summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "covariate                     coef      HR        95% CI              p\n",
        );
        for t in &self.terms {
            out.push_str(&format!(
                "{:<28} {:>8.4} {:>8.3}  [{:>7.3}, {:>7.3}]  {:>8.5}\n",
                t.name, t.coefficient, t.hazard_ratio, t.ci_lower, t.ci_upper, t.p_value
            ));
        }
        out.push_str(&format!(
            "c-index {:.4}   log-likelihood {:.6}   iterations {}{}\n",
            self.c_index,
            self.convergence.final_log_likelihood,
            self.convergence.iterations,
            if self.convergence.converged {
                ""
            } else {
                "   (not converged)"
            }
        ));
        out
    }
}

/// Precomputed event-time ordering shared by the likelihood routines.
struct CoxLayout {
    /// subject indices sorted by descending time
    desc: Vec<usize>,
    /// groups of subjects sharing an event time (indices into `desc` order);
    /// each group records how many subjects are at risk at that time
    event_blocks: Vec<EventBlock>,
}

struct EventBlock {
    /// events at this time (subject indices)
    events: Vec<usize>,
    /// risk set size boundary: subjects desc[0..at_risk_len] have time >= t
    at_risk_len: usize,
}

fn layout(data: &SurvivalDataset) -> CoxLayout {
    let n = data.len();
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&i, &j| data.time[j].partial_cmp(&data.time[i]).unwrap());

    let mut event_blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let t = data.time[desc[i]];
        let mut j = i;
        let mut events = Vec::new();
        while j < n && data.time[desc[j]] == t {
            if data.event[desc[j]] == 1 {
                events.push(desc[j]);
            }
            j += 1;
        }
        if !events.is_empty() {
            event_blocks.push(EventBlock {
                events,
                at_risk_len: j,
            });
        }
        i = j;
    }
    CoxLayout { desc, event_blocks }
}

/// Breslow partial log-likelihood at the given coefficients: every event
/// contributes its linear predictor minus the log of the risk-set sum of
/// exp(linear predictor); tied events share the full risk set.
pub fn partial_log_likelihood(data: &SurvivalDataset, beta: &[f64]) -> Result<f64> {
    let x = data
        .covariates
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("Cox needs covariates".into()))?;
    if beta.len() != x.n_cols() {
        return Err(Error::LengthMismatch(beta.len(), x.n_cols()));
    }
    let lay = layout(data);
    let lp: Vec<f64> = (0..data.len())
        .map(|i| x.row(i).iter().zip(beta).map(|(v, b)| v * b).sum())
        .collect();
    let mut ll = 0.0;
    let mut cum = 0.0;
    let mut consumed = 0;
    for block in &lay.event_blocks {
        while consumed < block.at_risk_len {
            cum += lp[lay.desc[consumed]].exp();
            consumed += 1;
        }
        for &subject in &block.events {
            ll += lp[subject] - cum.ln();
        }
    }
    Ok(ll)
}

/// Gradient and observed information of the Breslow partial likelihood.
fn derivatives(
    data: &SurvivalDataset,
    lay: &CoxLayout,
    beta: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let x = data.covariates.as_ref().unwrap();
    let p = beta.len();
    let n = data.len();
    let lp: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta).map(|(v, b)| v * b).sum())
        .collect();

    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![vec![0.0; p]; p];

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];
    let mut consumed = 0;
    for block in &lay.event_blocks {
        while consumed < block.at_risk_len {
            let idx = lay.desc[consumed];
            let w = lp[idx].exp();
            let row = x.row(idx);
            s0 += w;
            for a in 0..p {
                s1[a] += w * row[a];
                for b in a..p {
                    s2[a][b] += w * row[a] * row[b];
                }
            }
            consumed += 1;
        }
        let d = block.events.len() as f64;
        for &subject in &block.events {
            ll += lp[subject] - s0.ln();
            for a in 0..p {
                grad[a] += x.get(subject, a);
            }
        }
        for a in 0..p {
            grad[a] -= d * s1[a] / s0;
            for b in a..p {
                let v = d * (s2[a][b] / s0 - (s1[a] / s0) * (s1[b] / s0));
                info[a][b] += v;
                if a != b {
                    info[b][a] += v;
                }
            }
        }
    }
    (ll, grad, info)
}

const SEPARATION_GUARD: f64 = 50.0;
const MAX_ITERATIONS: usize = 100;
const LL_TOLERANCE: f64 = 1e-9;

/// Fit by Newton-Raphson with step-halving on non-increase. Convergence is
/// a log-likelihood change below 1e-9 within 100 iterations; a coefficient
/// walking past |beta| = 50 is reported as monotone-likelihood separation.
pub fn fit_cox(data: &SurvivalDataset) -> Result<CoxModel> {
    let x = data
        .covariates
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("Cox needs covariates".into()))?;
    if data.event.iter().all(|&e| e == 0) {
        return Err(Error::InvalidParameter("Cox needs at least one event".into()));
    }
    let scale = (0..x.n_rows)
        .flat_map(|r| x.row(r).iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    if scale > 1e3 {
        eprintln!("warning: covariate magnitude {scale:.1} > 1e3; consider standardizing");
    }

    let p = x.n_cols();
    let lay = layout(data);
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut info) = derivatives(data, &lay, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut separation = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some(step) = math::solve_linear(&info, &grad) else {
            break; // singular information: stop at the current estimate
        };
        // step-halving until the likelihood does not decrease
        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b + factor * s)
                .collect();
            let (new_ll, new_grad, new_info) = derivatives(data, &lay, &candidate);
            if new_ll.is_finite() && new_ll >= ll - 1e-12 {
                let delta = new_ll - ll;
                beta = candidate;
                ll = new_ll;
                grad = new_grad;
                info = new_info;
                accepted = true;
                if delta.abs() < LL_TOLERANCE {
                    converged = true;
                }
                break;
            }
            factor *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_GUARD) {
            separation = true;
            break;
        }
        if converged || !accepted {
            break;
        }
    }

    let covariance = math::invert(&info);
    let z = 1.959963984540054; // 97.5% normal quantile
    let terms = (0..p)
        .map(|a| {
            let se = covariance
                .as_ref()
                .map(|c| c[a][a].max(0.0).sqrt())
                .unwrap_or(f64::NAN);
            let coefficient = beta[a];
            let (ci_lower, ci_upper, p_value) = if se.is_finite() && se > 0.0 {
                (
                    (coefficient - z * se).exp(),
                    (coefficient + z * se).exp(),
                    math::two_sided_normal_p(coefficient / se),
                )
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            CoxTerm {
                name: x.columns[a].name.clone(),
                coefficient,
                hazard_ratio: coefficient.exp(),
                se,
                ci_lower,
                ci_upper,
                p_value,
            }
        })
        .collect::<Vec<_>>();

    let lp: Vec<f64> = (0..x.n_rows)
        .map(|r| {
            x.row(r)
                .iter()
                .zip(&beta)
                .map(|(v, b)| v * b)
                .sum::<f64>()
        })
        .collect();
    let c_index = concordance_index(&lp, data)?;

    if separation {
        return Err(Error::NonConvergence(
            "cox",
            format!(
                "coefficient diverged past |beta| = {SEPARATION_GUARD} (monotone likelihood / perfect separation)"
            ),
        ));
    }
    Ok(CoxModel {
        terms,
        c_index,
        convergence: CoxConvergence {
            iterations,
            converged,
            final_log_likelihood: ll,
            separation_detected: false,
        },
    })
}
