//! Deterministic experimental state evolution: the forward model for
//! subpopulation sample-mean outcomes and the analytic oracle used by the
//! estimator tests.
//!
//! The mapping `F(nu, pi_s, q_s, pi; theta)` is affine in the reduced
//! parameter vector `theta`, which is what makes exact least-squares recovery
//! possible downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EffectSeries, StructuralParams};

/// Default cap on |nu| before a trajectory is reported as divergent.
pub const DIVERGENCE_CAP: f64 = 1e6;

/// Reduced parameter vector `(delta_h, delta_a, tau_h, tau_a, alpha_bar,
/// beta_bar, gamma_bar)` where the barred coefficients absorb the average
/// interference strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaReduced {
    pub delta_h: f64,
    pub delta_a: f64,
    pub tau_h: f64,
    pub tau_a: f64,
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub gamma_bar: f64,
}

impl ThetaReduced {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.delta_h,
            self.delta_a,
            self.tau_h,
            self.tau_a,
            self.alpha_bar,
            self.beta_bar,
            self.gamma_bar,
        ]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        ThetaReduced {
            delta_h: v[0],
            delta_a: v[1],
            tau_h: v[2],
            tau_a: v[3],
            alpha_bar: v[4],
            beta_bar: v[5],
            gamma_bar: v[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Deterministic limit trajectory of a (sub)population sample mean.
#[derive(Debug, Clone)]
pub struct ESETrajectory {
    /// `nu[t]` for `t = 0..=t_max`.
    pub nu: Vec<f64>,
    /// Own treatment path, `pi[t-1]` for round `t`.
    pub pi: Vec<f64>,
    /// Composition of the tracked group.
    pub q_bar: f64,
}

impl ESETrajectory {
    /// CSV export `(t, nu, pi)`; round 0 has an empty rate field.
    pub fn to_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "nu", "pi"])?;
        for (t, nu) in self.nu.iter().enumerate() {
            let pi = if t == 0 {
                String::new()
            } else {
                self.pi[t - 1].to_string()
            };
            w.write_record([t.to_string(), nu.to_string(), pi])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Collapse structural parameters to the reduced vector at population
/// composition `q_bar`: `mu_bar = mu_h*q_bar + mu_a*(1-q_bar)` multiplies
/// the interaction coefficients.
pub fn reduce_params(params: &StructuralParams, q_bar: f64) -> ThetaReduced {
    let mu_bar = params.mu_h * q_bar + params.mu_a * (1.0 - q_bar);
    ThetaReduced {
        delta_h: params.delta_h,
        delta_a: params.delta_a,
        tau_h: params.tau_h,
        tau_a: params.tau_a,
        alpha_bar: mu_bar * params.alpha,
        beta_bar: mu_bar * params.beta,
        gamma_bar: mu_bar * params.gamma,
    }
}

/// One step of the state evolution:
/// `F(nu, pi_s, q_s, pi) = delta_h q_s + delta_a (1-q_s)
///   + (tau_h q_s + tau_a (1-q_s)) pi_s + alpha_bar pi + beta_bar nu
///   + gamma_bar pi nu`.
#[inline]
pub fn ese_step(nu_prev: f64, pi_s: f64, q_s: f64, pi_pop: f64, theta: &ThetaReduced) -> f64 {
    theta.delta_h * q_s
        + theta.delta_a * (1.0 - q_s)
        + (theta.tau_h * q_s + theta.tau_a * (1.0 - q_s)) * pi_s
        + theta.alpha_bar * pi_pop
        + theta.beta_bar * nu_prev
        + theta.gamma_bar * pi_pop * nu_prev
}

fn check_inputs(theta: &ThetaReduced, nu0: f64) -> Result<()> {
    if !theta.is_finite() || !nu0.is_finite() {
        return Err(Error::NonFinite("ese inputs"));
    }
    Ok(())
}

/// Iterate the recursion with the trajectory itself as the memory argument.
/// With `q_s = q_bar` and `pi_s = pi_pop` this is the full-population state
/// evolution; with `pi_s = pi_pop ∈ {0, 1}` it yields the counterfactual
/// population paths of the estimation algorithm.
pub fn ese_trajectory(
    theta: &ThetaReduced,
    q_s: f64,
    pi_s_path: &[f64],
    pi_pop_path: &[f64],
    nu0: f64,
    t_max: usize,
) -> Result<ESETrajectory> {
    check_inputs(theta, nu0)?;
    if pi_s_path.len() != t_max || pi_pop_path.len() != t_max {
        return Err(Error::Dimension(format!(
            "rate paths must have length t_max = {t_max}"
        )));
    }
    let mut nu = Vec::with_capacity(t_max + 1);
    nu.push(nu0);
    for t in 1..=t_max {
        let next = ese_step(nu[t - 1], pi_s_path[t - 1], q_s, pi_pop_path[t - 1], theta);
        if !next.is_finite() || next.abs() > DIVERGENCE_CAP {
            return Err(Error::Divergence {
                round: t,
                value: next,
            });
        }
        nu.push(next);
    }
    Ok(ESETrajectory {
        nu,
        pi: pi_s_path.to_vec(),
        q_bar: q_s,
    })
}

/// Batch trajectory: the memory argument is a separately supplied population
/// trajectory, as in the batch state evolution.
pub fn ese_batch_trajectory(
    theta: &ThetaReduced,
    q_s: f64,
    pi_s_path: &[f64],
    pop: &ESETrajectory,
) -> Result<Vec<f64>> {
    check_inputs(theta, pop.nu[0])?;
    let t_max = pi_s_path.len();
    if pop.nu.len() != t_max + 1 || pop.pi.len() != t_max {
        return Err(Error::Dimension(
            "population trajectory does not cover the batch horizon".into(),
        ));
    }
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(pop.nu[0]);
    for t in 1..=t_max {
        out.push(ese_step(
            pop.nu[t - 1],
            pi_s_path[t - 1],
            q_s,
            pop.pi[t - 1],
            theta,
        ));
    }
    Ok(out)
}

/// Which memory the human counterfactual readout carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanMemory {
    /// Feed the population counterfactual state into the human readout
    /// (the estimation algorithm's literal form; the default).
    #[default]
    PopulationPath,
    /// Let the human readout carry its own state (sensitivity variant).
    OwnPath,
}

/// Counterfactual trajectories under full treatment and full control.
#[derive(Debug, Clone)]
pub struct CounterfactualPaths {
    pub human_treated: Vec<f64>,
    pub human_control: Vec<f64>,
    pub pop_treated: Vec<f64>,
    pub pop_control: Vec<f64>,
    pub tte_h: EffectSeries,
}

impl CounterfactualPaths {
    /// Population-level effect series (treated minus control population path).
    pub fn population_effect(&self) -> EffectSeries {
        let values = self
            .pop_treated
            .iter()
            .zip(&self.pop_control)
            .map(|(a, b)| a - b)
            .collect();
        EffectSeries::from_values(values)
    }
}

/// Propagate the treated/control counterfactual pairs from `nu0` and return
/// all four paths plus the human effect series.
///
/// Population paths iterate `F(nu, pi, q_bar, pi)` with `pi ∈ {1, 0}`; human
/// readouts evaluate `F(memory, pi, 1, pi)` where the memory argument is
/// selected by `human_memory`. Treatment switches on at round `treat_from`
/// (1 reproduces the estimation algorithm's listing verbatim; a later start
/// matches designs whose intervention begins after a warmup phase, keeping
/// the effect series aligned with a shared-warmup ground truth).
pub fn counterfactual_paths_from(
    theta: &ThetaReduced,
    q_bar: f64,
    nu0: f64,
    t_max: usize,
    treat_from: usize,
    human_memory: HumanMemory,
) -> Result<CounterfactualPaths> {
    check_inputs(theta, nu0)?;
    let mut pop_treated = vec![nu0];
    let mut pop_control = vec![nu0];
    let mut human_treated = vec![nu0];
    let mut human_control = vec![nu0];
    let mut tte = vec![0.0];
    for t in 1..=t_max {
        let pi = if t >= treat_from { 1.0 } else { 0.0 };
        let p1 = ese_step(pop_treated[t - 1], pi, q_bar, pi, theta);
        let p0 = ese_step(pop_control[t - 1], 0.0, q_bar, 0.0, theta);
        let (mem1, mem0) = match human_memory {
            HumanMemory::PopulationPath => (pop_treated[t - 1], pop_control[t - 1]),
            HumanMemory::OwnPath => (human_treated[t - 1], human_control[t - 1]),
        };
        let h1 = ese_step(mem1, pi, 1.0, pi, theta);
        let h0 = ese_step(mem0, 0.0, 1.0, 0.0, theta);
        let worst = p1.abs().max(p0.abs()).max(h1.abs()).max(h0.abs());
        if !worst.is_finite() || worst > DIVERGENCE_CAP {
            return Err(Error::Divergence {
                round: t,
                value: worst,
            });
        }
        pop_treated.push(p1);
        pop_control.push(p0);
        human_treated.push(h1);
        human_control.push(h0);
        tte.push(h1 - h0);
    }
    Ok(CounterfactualPaths {
        human_treated,
        human_control,
        pop_treated,
        pop_control,
        tte_h: EffectSeries::from_values(tte),
    })
}

/// [`counterfactual_paths_from`] with treatment from round 1 (the literal
/// listing).
pub fn counterfactual_paths(
    theta: &ThetaReduced,
    q_bar: f64,
    nu0: f64,
    t_max: usize,
    human_memory: HumanMemory,
) -> Result<CounterfactualPaths> {
    counterfactual_paths_from(theta, q_bar, nu0, t_max, 1, human_memory)
}

/// Analytic human total treatment effect series at a known parameter vector:
/// the oracle against which estimates and Monte Carlo ground truth are
/// compared. Treatment from round 1.
pub fn analytic_tte_h(
    theta: &ThetaReduced,
    q_bar: f64,
    nu0: f64,
    t_max: usize,
) -> Result<EffectSeries> {
    Ok(counterfactual_paths(theta, q_bar, nu0, t_max, HumanMemory::PopulationPath)?.tte_h)
}

/// Analytic oracle for a design whose intervention starts at `treat_from`
/// (warmup rounds carry an exactly zero effect, matching a shared-warmup
/// parallel-worlds ground truth).
pub fn analytic_tte_h_from(
    theta: &ThetaReduced,
    q_bar: f64,
    nu0: f64,
    t_max: usize,
    treat_from: usize,
) -> Result<EffectSeries> {
    Ok(
        counterfactual_paths_from(theta, q_bar, nu0, t_max, treat_from, HumanMemory::PopulationPath)?
            .tte_h,
    )
}
