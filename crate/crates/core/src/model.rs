//! Shared domain types, the type/prior generative processes, and Bernoulli
//! treatment assignment.
//!
//! All operations here are pure given `(config, seed)`: every draw comes from
//! a keyed substream (see [`crate::rng`]), so identical inputs produce
//! bit-identical output regardless of thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tags, RngContext};

/// How per-unit priors and latent types are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// `q_i ~ p_u`, then `u_i ~ Bernoulli(q_i)`.
    ModelFaithful,
    /// Fixed human fraction; priors derived from true types through a noisy
    /// classifier (the benchmark default).
    #[default]
    Classifier,
}

/// Prior distribution `p_u` over `[0, 1]` for model-faithful type generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `lo` with probability `1 - weight_hi`, `hi` with probability `weight_hi`.
    TwoPoint { lo: f64, hi: f64, weight_hi: f64 },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok01 = |x: f64| (0.0..=1.0).contains(&x);
        match *self {
            PriorSpec::PointMass { value } => {
                if !ok01(value) {
                    return Err(Error::InvalidDistribution(format!(
                        "point mass at {value} outside [0,1]"
                    )));
                }
            }
            PriorSpec::Uniform { lo, hi } => {
                if !ok01(lo) || !ok01(hi) || lo > hi {
                    return Err(Error::InvalidDistribution(format!(
                        "uniform[{lo},{hi}] not supported on [0,1]"
                    )));
                }
            }
            PriorSpec::TwoPoint { lo, hi, weight_hi } => {
                if !ok01(lo) || !ok01(hi) || !ok01(weight_hi) {
                    return Err(Error::InvalidDistribution(format!(
                        "two-point ({lo},{hi},w={weight_hi}) not supported on [0,1]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, u: f64) -> f64 {
        match *self {
            PriorSpec::PointMass { value } => value,
            PriorSpec::Uniform { lo, hi } => lo + u * (hi - lo),
            PriorSpec::TwoPoint { lo, hi, weight_hi } => {
                if u < weight_hi {
                    hi
                } else {
                    lo
                }
            }
        }
    }
}

/// Population shape and horizon. The observation window is rounds
/// `0..=T` with `T = t_warmup + t_main`; round 0 carries no treatment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n_units: usize,
    pub t_warmup: usize,
    pub t_main: usize,
    pub seed: u64,
    /// Human share used in classifier mode.
    pub human_fraction: f64,
    pub prior_mode: PriorMode,
    /// `p_u` for model-faithful mode; ignored in classifier mode.
    #[serde(default)]
    pub p_u: Option<PriorSpec>,
}

impl PopulationConfig {
    /// Total number of treated rounds (`T`).
    pub fn t_total(&self) -> usize {
        self.t_warmup + self.t_main
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(Error::Config(format!("n_units = {} < 2", self.n_units)));
        }
        if self.t_main < 3 {
            return Err(Error::Config(format!(
                "t_main = {} < 3 (temporal non-degeneracy needs at least 3 main rounds)",
                self.t_main
            )));
        }
        if !(0.0..=1.0).contains(&self.human_fraction) {
            return Err(Error::Config(format!(
                "human_fraction = {} outside [0,1]",
                self.human_fraction
            )));
        }
        if let Some(spec) = &self.p_u {
            spec.validate()?;
        }
        if self.prior_mode == PriorMode::ModelFaithful && self.p_u.is_none() {
            return Err(Error::Config(
                "model_faithful prior mode requires a p_u spec".into(),
            ));
        }
        Ok(())
    }
}

fn default_stability_cap() -> f64 {
    0.95
}

/// Structural coefficients of the outcome dynamics.
///
/// `mu_h`/`mu_a` are the average interference strengths received by human and
/// AI units; `sigma_fixed` and `sigma_time` scale the fixed and per-round
/// interference noise (entry variances `sigma^2 / N`); `noise_sd` is the
/// idiosyncratic outcome noise; `(init_mean, init_sd)` give the law of the
/// pre-treatment outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuralParams {
    pub delta_h: f64,
    pub delta_a: f64,
    pub tau_h: f64,
    pub tau_a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu_h: f64,
    pub mu_a: f64,
    pub sigma_fixed: f64,
    pub sigma_time: f64,
    /// Per-round override for `sigma_time`; length `T` when present.
    #[serde(default)]
    pub sigma_time_schedule: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub init_mean: f64,
    pub init_sd: f64,
    /// Cap on the effective memory coefficient so forward trajectories stay
    /// bounded over the fixed horizon.
    #[serde(default = "default_stability_cap")]
    pub stability_cap: f64,
}

impl StructuralParams {
    /// `sigma_time` for round `t` (1-based).
    pub fn sigma_time_at(&self, t: usize) -> f64 {
        match &self.sigma_time_schedule {
            Some(sched) => sched[t - 1],
            None => self.sigma_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_fixed", self.sigma_fixed),
            ("sigma_time", self.sigma_time),
            ("noise_sd", self.noise_sd),
            ("init_sd", self.init_sd),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        if let Some(sched) = &self.sigma_time_schedule {
            if sched.iter().any(|&s| s < 0.0 || !s.is_finite()) {
                return Err(Error::Config("sigma_time_schedule entries must be >= 0".into()));
            }
        }
        let fields = [
            self.delta_h,
            self.delta_a,
            self.tau_h,
            self.tau_a,
            self.alpha,
            self.beta,
            self.gamma,
            self.mu_h,
            self.mu_a,
            self.init_mean,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("structural coefficients must be finite".into()));
        }
        // Worst-case effective memory coefficient over treatment rates in [0,1].
        let mu_max = self.mu_h.abs().max(self.mu_a.abs());
        let memory = mu_max * self.beta.abs().max((self.beta + self.gamma).abs());
        if memory > self.stability_cap {
            return Err(Error::Config(format!(
                "effective memory coefficient {memory:.3} exceeds stability cap {}",
                self.stability_cap
            )));
        }
        Ok(())
    }
}

/// Classifier quality for prior generation: accuracy `a` and noise scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorQualityConfig {
    pub accuracy: f64,
    pub noise_sd: f64,
}

impl PriorQualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.accuracy) {
            return Err(Error::Config(format!(
                "classifier accuracy {} outside [0.5, 1]",
                self.accuracy
            )));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(Error::Config(format!(
                "classifier noise_sd {} must be >= 0",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// Simulation scenario label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Control,
    Treatment,
    Experiment,
    Custom,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Control => "control",
            Scenario::Treatment => "treatment",
            Scenario::Experiment => "experiment",
            Scenario::Custom => "custom",
        }
    }
}

/// Per-round treatment probabilities. Warmup rounds must carry rate 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreatmentPlan {
    pub pi_schedule: Vec<f64>,
    pub scenario: Scenario,
}

impl TreatmentPlan {
    /// All-zero schedule over `t_warmup + t_main` rounds.
    pub fn control(t_warmup: usize, t_main: usize) -> Self {
        TreatmentPlan {
            pi_schedule: vec![0.0; t_warmup + t_main],
            scenario: Scenario::Control,
        }
    }

    /// Zero warmup, then full treatment in every main round.
    pub fn treatment(t_warmup: usize, t_main: usize) -> Self {
        let mut pi = vec![0.0; t_warmup];
        pi.extend(std::iter::repeat(1.0).take(t_main));
        TreatmentPlan {
            pi_schedule: pi,
            scenario: Scenario::Treatment,
        }
    }

    /// Zero warmup, then contiguous phases with the given rates. Main rounds
    /// are split across phases as evenly as possible.
    pub fn experiment(t_warmup: usize, t_main: usize, phases: &[f64]) -> Self {
        let mut pi = vec![0.0; t_warmup];
        if phases.is_empty() {
            pi.extend(std::iter::repeat(0.0).take(t_main));
        } else {
            let k = phases.len();
            for p in 0..k {
                let start = p * t_main / k;
                let end = (p + 1) * t_main / k;
                pi.extend(std::iter::repeat(phases[p]).take(end - start));
            }
        }
        TreatmentPlan {
            pi_schedule: pi,
            scenario: Scenario::Experiment,
        }
    }

    pub fn custom(pi_schedule: Vec<f64>) -> Self {
        TreatmentPlan {
            pi_schedule,
            scenario: Scenario::Custom,
        }
    }

    pub fn t_total(&self) -> usize {
        self.pi_schedule.len()
    }

    /// Rate at round `t` (1-based).
    pub fn rate_at(&self, t: usize) -> f64 {
        self.pi_schedule[t - 1]
    }

    pub fn validate(&self, t_warmup: usize) -> Result<()> {
        if self.pi_schedule.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("treatment rates must lie in [0,1]".into()));
        }
        if self.pi_schedule.len() < t_warmup {
            return Err(Error::Config(format!(
                "schedule length {} shorter than warmup {}",
                self.pi_schedule.len(),
                t_warmup
            )));
        }
        if self.pi_schedule[..t_warmup].iter().any(|&p| p != 0.0) {
            return Err(Error::Config("warmup rounds must have rate 0".into()));
        }
        Ok(())
    }
}

/// Latent types and observed priors.
///
/// `u` is ground truth: it is read only by the simulator and by ground-truth
/// evaluation, never by subpopulation construction or estimation.
#[derive(Debug, Clone)]
pub struct TypeAssignment {
    /// 1 = human, 0 = AI.
    pub u: Vec<u8>,
    /// Observed human priors `q_i` in `[0,1]`.
    pub q: Vec<f64>,
}

impl TypeAssignment {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn human_count(&self) -> usize {
        self.u.iter().filter(|&&b| b == 1).count()
    }

    pub fn mean_prior(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.q.len() as f64
    }
}

/// Panel of observed experiment data: outcomes, treatments, priors.
///
/// `y` is `N x (T+1)` with column 0 the pre-treatment outcome; `w` is
/// `N x T` binary.
#[derive(Debug, Clone)]
pub struct Panel {
    pub y: ndarray::Array2<f64>,
    pub w: ndarray::Array2<u8>,
    pub q: Vec<f64>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Panel {
    pub fn n_units(&self) -> usize {
        self.y.nrows()
    }

    /// Number of treated rounds `T`.
    pub fn t_total(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t1) = (self.y.nrows(), self.y.ncols());
        if t1 == 0 || self.w.nrows() != n || self.w.ncols() + 1 != t1 || self.q.len() != n {
            return Err(Error::Dimension(format!(
                "panel y {}x{}, w {}x{}, q {}",
                n,
                t1,
                self.w.nrows(),
                self.w.ncols(),
                self.q.len()
            )));
        }
        if self.w.iter().any(|&w| w > 1) {
            return Err(Error::Dimension("treatment entries must be 0/1".into()));
        }
        Ok(())
    }

    /// Mean outcome per round over `units` (all units when `None`).
    pub fn outcome_means(&self, units: Option<&[usize]>) -> Vec<f64> {
        match units {
            None => (0..self.y.ncols())
                .map(|t| self.y.column(t).mean().unwrap())
                .collect(),
            Some(idx) => (0..self.y.ncols())
                .map(|t| idx.iter().map(|&i| self.y[[i, t]]).sum::<f64>() / idx.len() as f64)
                .collect(),
        }
    }

    /// Mean treatment per round (length `T`) over `units`.
    pub fn treatment_means(&self, units: Option<&[usize]>) -> Vec<f64> {
        match units {
            None => (0..self.w.ncols())
                .map(|t| self.w.column(t).iter().map(|&w| w as f64).sum::<f64>() / self.n_units() as f64)
                .collect(),
            Some(idx) => (0..self.w.ncols())
                .map(|t| idx.iter().map(|&i| self.w[[i, t]] as f64).sum::<f64>() / idx.len() as f64)
                .collect(),
        }
    }
}

/// Per-round treatment-effect values; entry 0 is fixed at 0. Rounds where an
/// estimator is undefined carry NaN markers.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSeries {
    pub values: Vec<f64>,
}

impl EffectSeries {
    pub fn zeros(t_total: usize) -> Self {
        EffectSeries {
            values: vec![0.0; t_total + 1],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        debug_assert!(values.first().map_or(true, |&v| v == 0.0));
        EffectSeries { values }
    }

    pub fn len_rounds(&self) -> usize {
        self.values.len() - 1
    }

    /// Mean over rounds `lo..=hi`, skipping nothing: NaN markers propagate.
    pub fn mean_over(&self, lo: usize, hi: usize) -> f64 {
        let slice = &self.values[lo..=hi];
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Generative operations
// ---------------------------------------------------------------------------

/// Draw priors `q_i ~ p_u` i.i.d., then latent types `u_i ~ Bernoulli(q_i)`.
pub fn draw_types_model(n: usize, p_u: &PriorSpec, rng: &RngContext) -> Result<TypeAssignment> {
    p_u.validate()?;
    let mut q = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let qi = p_u.sample(rng.uniform(&[tags::PRIORS, i as u64]));
        let ui = (rng.uniform(&[tags::TYPES, i as u64]) < qi) as u8;
        q.push(qi);
        u.push(ui);
    }
    Ok(TypeAssignment { u, q })
}

/// Fixed-fraction type assignment: exactly `round(n * human_fraction)` humans
/// at seeded-shuffled positions. Priors must be attached separately (see
/// [`gen_priors_classifier`]).
pub fn draw_types_fixed_split(n: usize, human_fraction: f64, rng: &RngContext) -> Vec<u8> {
    let n_h = (n as f64 * human_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut s = rng.stream(&[tags::TYPE_SHUFFLE]);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = s.next_below(i + 1);
        idx.swap(i, j);
    }
    let mut u = vec![0u8; n];
    for &i in idx.iter().take(n_h) {
        u[i] = 1;
    }
    u
}

/// Noiseless classifier value before clipping: `u*a + (1-u)*(1-a) + eps`.
#[inline]
pub fn classifier_prior_value(u: u8, accuracy: f64, eps: f64) -> f64 {
    let raw = if u == 1 { accuracy } else { 1.0 - accuracy };
    (raw + eps).clamp(0.0, 1.0)
}

/// Generate classifier priors `q_i = clip(u_i a + (1-u_i)(1-a) + eps_i, 0, 1)`
/// with `eps_i ~ Normal(0, noise_sd^2)` i.i.d.
pub fn gen_priors_classifier(u: &[u8], cfg: &PriorQualityConfig, rng: &RngContext) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(u.iter()
        .enumerate()
        .map(|(i, &ui)| {
            let eps = cfg.noise_sd * rng.normal(&[tags::PRIORS, i as u64]);
            classifier_prior_value(ui, cfg.accuracy, eps)
        })
        .collect())
}

/// Draw the full `N x T` Bernoulli treatment matrix for a plan.
pub fn assign_treatments(plan: &TreatmentPlan, n: usize, rng: &RngContext) -> ndarray::Array2<u8> {
    let t_total = plan.t_total();
    let mut w = ndarray::Array2::<u8>::zeros((n, t_total));
    for t in 1..=t_total {
        let p = plan.rate_at(t);
        if p == 0.0 {
            continue;
        }
        if p == 1.0 {
            w.column_mut(t - 1).fill(1);
            continue;
        }
        for i in 0..n {
            let u = rng.uniform(&[tags::TREATMENT, i as u64, t as u64]);
            w[[i, t - 1]] = (u < p) as u8;
        }
    }
    w
}

/// Build the type assignment for a population config (both prior modes).
pub fn build_population(
    cfg: &PopulationConfig,
    prior_quality: &PriorQualityConfig,
    rng: &RngContext,
) -> Result<TypeAssignment> {
    cfg.validate()?;
    match cfg.prior_mode {
        PriorMode::ModelFaithful => {
            let spec = cfg
                .p_u
                .as_ref()
                .ok_or_else(|| Error::Config("model_faithful mode requires p_u".into()))?;
            draw_types_model(cfg.n_units, spec, rng)
        }
        PriorMode::Classifier => {
            let u = draw_types_fixed_split(cfg.n_units, cfg.human_fraction, rng);
            let q = gen_priors_classifier(&u, prior_quality, rng)?;
            Ok(TypeAssignment { u, q })
        }
    }
}
