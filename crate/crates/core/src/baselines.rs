//! Reference estimators: per-round difference in means (raw and
//! prior-filtered), the Hajek prior-weighted estimator, and two
//! composition-blind structural baselines.
//!
//! Rounds where an estimator is undefined (an empty treatment arm) carry NaN
//! markers in the effect series rather than zeros.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EffectSeries, Panel};
use crate::subpop::{self, Subpopulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Dim,
    DimFiltered,
    HtQ,
    CmpBasic,
    CmpFull,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::Dim => "dim",
            BaselineKind::DimFiltered => "dim_filtered",
            BaselineKind::HtQ => "ht_q",
            BaselineKind::CmpBasic => "cmp_basic",
            BaselineKind::CmpFull => "cmp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub effect: EffectSeries,
}

/// Which units the filtered difference in means keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    /// `q_i > threshold` with a fixed cutoff (default 0.5).
    Fixed(f64),
    /// `q_i` above the empirical median.
    Median,
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule::Fixed(0.5)
    }
}

fn arm_means(panel: &Panel, units: &[usize], t: usize) -> Option<(f64, f64)> {
    let mut sum_t = 0.0;
    let mut n_t = 0usize;
    let mut sum_c = 0.0;
    let mut n_c = 0usize;
    for &i in units {
        let y = panel.y[[i, t]];
        if panel.w[[i, t - 1]] == 1 {
            sum_t += y;
            n_t += 1;
        } else {
            sum_c += y;
            n_c += 1;
        }
    }
    if n_t == 0 || n_c == 0 {
        return None;
    }
    Some((sum_t / n_t as f64, sum_c / n_c as f64))
}

fn dim_over(panel: &Panel, units: &[usize]) -> EffectSeries {
    let t_total = panel.t_total();
    let mut values = vec![0.0];
    for t in 1..=t_total {
        values.push(match arm_means(panel, units, t) {
            Some((mt, mc)) => mt - mc,
            None => f64::NAN,
        });
    }
    EffectSeries { values }
}

/// Per-round difference in means over the whole population.
pub fn dim(panel: &Panel) -> BaselineResult {
    let units: Vec<usize> = (0..panel.n_units()).collect();
    BaselineResult {
        kind: BaselineKind::Dim,
        effect: dim_over(panel, &units),
    }
}

/// Difference in means restricted to units whose prior clears the filter.
pub fn dim_filtered(panel: &Panel, rule: FilterRule) -> Result<BaselineResult> {
    let threshold = match rule {
        FilterRule::Fixed(t) => t,
        FilterRule::Median => {
            let mut q = panel.q.clone();
            q.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = q.len();
            if n % 2 == 1 {
                q[n / 2]
            } else {
                0.5 * (q[n / 2 - 1] + q[n / 2])
            }
        }
    };
    let units: Vec<usize> = (0..panel.n_units())
        .filter(|&i| panel.q[i] > threshold)
        .collect();
    if units.is_empty() {
        return Err(Error::EmptyFilteredSet { threshold });
    }
    Ok(BaselineResult {
        kind: BaselineKind::DimFiltered,
        effect: dim_over(panel, &units),
    })
}

/// Hajek estimator with the human priors as soft weights:
/// treated weighted mean minus control weighted mean per round.
pub fn ht_q(panel: &Panel) -> BaselineResult {
    let t_total = panel.t_total();
    let mut values = vec![0.0];
    for t in 1..=t_total {
        let mut num_t = 0.0;
        let mut den_t = 0.0;
        let mut num_c = 0.0;
        let mut den_c = 0.0;
        for i in 0..panel.n_units() {
            let q = panel.q[i];
            let y = panel.y[[i, t]];
            if panel.w[[i, t - 1]] == 1 {
                num_t += q * y;
                den_t += q;
            } else {
                num_c += q * y;
                den_c += q;
            }
        }
        values.push(if den_t > 0.0 && den_c > 0.0 {
            num_t / den_t - num_c / den_c
        } else {
            f64::NAN
        });
    }
    BaselineResult {
        kind: BaselineKind::HtQ,
        effect: EffectSeries { values },
    }
}

fn solve_ols(rows: &[Vec<f64>], response: &[f64], n_params: usize) -> Result<Vec<f64>> {
    let n_rows = rows.len();
    if n_rows < n_params {
        return Err(Error::TooFewRows {
            rows: n_rows,
            cols: n_params,
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let x = DMatrix::from_row_slice(n_rows, n_params, &flat);
    let y = DVector::from_column_slice(response);
    let svd = x.svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = n_rows.max(n_params) as f64 * f64::EPSILON * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < n_params {
        return Err(Error::RankDeficient {
            rank,
            cols: n_params,
        });
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Config(format!("svd solve failed: {e}")))?;
    Ok(beta.iter().copied().collect())
}

/// Three-parameter population recursion fitted by OLS on population
/// summaries, then propagated under full treatment and full control:
/// `y_t = lambda*pi_t + xi*y_{t-1} + g*pi_t*y_{t-1}` (no intercept).
///
/// `treat_from` is the round at which the counterfactual intervention
/// switches on (1 for a design treated from the first round; `t_warmup + 1`
/// to match a shared-warmup ground truth).
pub fn cmp_basic(panel: &Panel, treat_from: usize) -> Result<BaselineResult> {
    let t_total = panel.t_total();
    let pi = panel.treatment_means(None);
    let ybar = panel.outcome_means(None);
    let rows: Vec<Vec<f64>> = (1..=t_total)
        .map(|t| vec![pi[t - 1], ybar[t - 1], pi[t - 1] * ybar[t - 1]])
        .collect();
    let response: Vec<f64> = (1..=t_total).map(|t| ybar[t]).collect();
    let beta = solve_ols(&rows, &response, 3)?;
    let (lambda, xi, g) = (beta[0], beta[1], beta[2]);

    let mut nu1 = ybar[0];
    let mut nu0 = ybar[0];
    let mut values = vec![0.0];
    for t in 1..=t_total {
        let treated = t >= treat_from;
        nu1 = if treated {
            lambda + xi * nu1 + g * nu1
        } else {
            xi * nu1
        };
        nu0 = xi * nu0;
        values.push(nu1 - nu0);
    }
    Ok(BaselineResult {
        kind: BaselineKind::CmpBasic,
        effect: EffectSeries { values },
    })
}

/// Composition-blind ablation of the full estimator: per-(batch, round) rows
/// `[1, pi_kt, pi_t, y_{t-1}, pi_t*y_{t-1}]` with five parameters, propagated
/// with own rate equal to the population rate. Estimates the
/// population-average effect; composition cannot be set in the counterfactual.
pub fn cmp_full(
    panel: &Panel,
    batches: &[Subpopulation],
    treat_from: usize,
) -> Result<BaselineResult> {
    let t_total = panel.t_total();
    let (summaries, pop) = subpop::summarize(panel, batches);
    let mut rows = Vec::new();
    let mut response = Vec::new();
    for s in &summaries {
        for t in 1..=t_total {
            rows.push(vec![
                1.0,
                s.rate_at(t),
                pop.rate_at(t),
                pop.y_path[t - 1],
                pop.rate_at(t) * pop.y_path[t - 1],
            ]);
            response.push(s.y_path[t]);
        }
    }
    let beta = solve_ols(&rows, &response, 5)?;

    let f5 = |nu: f64, pi: f64| beta[0] + beta[1] * pi + beta[2] * pi + beta[3] * nu + beta[4] * pi * nu;
    let mut nu1 = pop.y_path[0];
    let mut nu0 = pop.y_path[0];
    let mut values = vec![0.0];
    for t in 1..=t_total {
        let pi = if t >= treat_from { 1.0 } else { 0.0 };
        nu1 = f5(nu1, pi);
        nu0 = f5(nu0, 0.0);
        values.push(nu1 - nu0);
    }
    Ok(BaselineResult {
        kind: BaselineKind::CmpFull,
        effect: EffectSeries { values },
    })
}
