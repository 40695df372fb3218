//! Outcome dynamics under type-dependent Gaussian interference: forward
//! simulation, shared-warmup parallel worlds, and Monte Carlo ground-truth
//! human treatment effects.
//!
//! Interference decomposes into a type-dependent mean part, a fixed Gaussian
//! deviation matrix `G` with entries `Normal(0, sigma^2/N)` that must stay
//! constant across rounds and worlds, and a per-round component that is
//! sampled through its exact scalar equivalent. `G` can be realized three
//! ways (see [`InterferenceMode`]); all realize the same law.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    assign_treatments, EffectSeries, Panel, PopulationConfig, StructuralParams, TreatmentPlan,
    TypeAssignment,
};
use crate::rng::{tags, RngContext, Stream};

/// Dense mode is refused above this row count unless the caller overrides.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

const LOWRANK_REL_TOL: f64 = 1e-12;

/// How the fixed Gaussian deviation matrix `G` is realized.
///
/// `Dense` and `Streamed` draw every entry from the same per-row counter
/// streams and are bit-identical to each other; `Dense` materializes the
/// matrix (memory-guarded) while `Streamed` regenerates rows on demand at
/// O(N^2) per step. `LowRank` never materializes `G`: each load `G g` is
/// sampled from its exact conditional law given all previously returned
/// loads (Gram-Schmidt on the span of past load vectors), at O(N K) per
/// step. The low-rank coupling is exact in distribution and is the practical
/// choice for large populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    Dense,
    Streamed,
    #[default]
    LowRank,
}

#[derive(Debug, Clone, Default)]
struct LowRankState {
    /// Orthonormal basis of previously loaded directions.
    basis: Vec<Vec<f64>>,
    /// `responses[m] = G basis[m]`, at final scale `sigma/sqrt(N)`.
    responses: Vec<Vec<f64>>,
    /// Fresh-direction counter (keys the deviate substream).
    fresh_draws: u64,
    /// Exact replay of past queries, so identical load vectors return
    /// bit-identical results (fixed-operator semantics).
    memo: HashMap<u64, Vec<(Vec<f64>, Vec<f64>)>>,
}

/// Realization of the fixed interference component
/// `A_ij = (u_i mu_h + (1-u_i) mu_a)/N + G_ij`.
#[derive(Debug, Clone)]
pub struct InterferenceHandle {
    pub mode: InterferenceMode,
    pub mu_h: f64,
    pub mu_a: f64,
    pub sigma_fixed: f64,
    n: usize,
    seed: u64,
    /// Receiver-type mean `u_i mu_h + (1-u_i) mu_a` per row.
    row_mu: Vec<f64>,
    /// Raw (unit-variance) deviates, dense mode only.
    dense: Option<Vec<f64>>,
    lowrank: Option<LowRankState>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn hash_f64_slice(v: &[f64]) -> u64 {
    // FNV-1a over the raw bits; collisions are resolved by full comparison.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in v {
        h ^= x.to_bits();
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl InterferenceHandle {
    /// Row stream of raw deviates; regenerating the same row always yields
    /// the same sequence.
    fn row_stream(seed: u64, i: usize) -> Stream {
        Stream::keyed(seed, &[tags::INTERFERENCE_ROW, i as u64])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw row dot `sum_j ghat_ij g_j` (before the `sigma/sqrt(N)` scale).
    /// Dense and streamed modes accumulate in identical order, so they agree
    /// bitwise.
    fn row_dot_raw(&self, i: usize, g: &[f64]) -> f64 {
        match self.mode {
            InterferenceMode::Dense => {
                let row = &self.dense.as_ref().unwrap()[i * self.n..(i + 1) * self.n];
                dot(row, g)
            }
            InterferenceMode::Streamed => {
                let mut s = Self::row_stream(self.seed, i);
                let mut acc = 0.0;
                for &gj in g {
                    acc += s.next_normal() * gj;
                }
                acc
            }
            InterferenceMode::LowRank => unreachable!("low-rank mode has no per-row access"),
        }
    }

    /// Fixed-component loads `(G g)_i` for every receiver row, at final
    /// scale. The mean part of `A` is handled by the caller.
    pub fn fixed_loads(&mut self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n);
        if self.sigma_fixed == 0.0 {
            return vec![0.0; self.n];
        }
        let scale = self.sigma_fixed / (self.n as f64).sqrt();
        match self.mode {
            InterferenceMode::Dense | InterferenceMode::Streamed => (0..self.n)
                .map(|i| scale * self.row_dot_raw(i, g))
                .collect(),
            InterferenceMode::LowRank => self.lowrank_apply(g, scale),
        }
    }

    fn lowrank_apply(&mut self, g: &[f64], scale: f64) -> Vec<f64> {
        let n = self.n;
        let seed = self.seed;
        let state = self.lowrank.as_mut().unwrap();

        let key = hash_f64_slice(g);
        if let Some(entries) = state.memo.get(&key) {
            for (g_prev, x_prev) in entries {
                if g_prev == g {
                    return x_prev.clone();
                }
            }
        }

        let norm_g = l2_norm(g);
        let mut residual = g.to_vec();
        let mut coeffs = vec![0.0; state.basis.len()];
        // Two passes of modified Gram-Schmidt keep the basis orthonormal to
        // working precision.
        for _ in 0..2 {
            for (m, b) in state.basis.iter().enumerate() {
                let c = dot(&residual, b);
                coeffs[m] += c;
                for i in 0..n {
                    residual[i] -= c * b[i];
                }
            }
        }
        let r_norm = l2_norm(&residual);

        let mut x = vec![0.0; n];
        for (m, v) in state.responses.iter().enumerate() {
            let c = coeffs[m];
            if c != 0.0 {
                for i in 0..n {
                    x[i] += c * v[i];
                }
            }
        }
        if r_norm > LOWRANK_REL_TOL * norm_g && r_norm > 0.0 {
            let mut s = Stream::keyed(seed, &[tags::INTERFERENCE_FRESH, state.fresh_draws]);
            state.fresh_draws += 1;
            let mut v_new = Vec::with_capacity(n);
            for _ in 0..n {
                v_new.push(scale * s.next_normal());
            }
            for i in 0..n {
                x[i] += r_norm * v_new[i];
                residual[i] /= r_norm;
            }
            state.basis.push(residual);
            state.responses.push(v_new);
        }
        state.memo.entry(key).or_default().push((g.to_vec(), x.clone()));
        x
    }

    /// Realized row sums `sum_j A_ij` (mean part plus fixed deviations).
    pub fn row_sums(&mut self) -> Vec<f64> {
        let ones = vec![1.0; self.n];
        let loads = self.fixed_loads(&ones);
        (0..self.n).map(|i| self.row_mu[i] + loads[i]).collect()
    }
}

/// Realize the fixed interference component for a population.
pub fn build_interference(
    params: &StructuralParams,
    u: &[u8],
    mode: InterferenceMode,
    rng: &RngContext,
    dense_cap: usize,
) -> Result<InterferenceHandle> {
    let n = u.len();
    if n < 2 {
        return Err(Error::Config(format!("population size {n} < 2")));
    }
    let row_mu: Vec<f64> = u
        .iter()
        .map(|&ui| if ui == 1 { params.mu_h } else { params.mu_a })
        .collect();
    let mut handle = InterferenceHandle {
        mode,
        mu_h: params.mu_h,
        mu_a: params.mu_a,
        sigma_fixed: params.sigma_fixed,
        n,
        seed: rng.seed(),
        row_mu,
        dense: None,
        lowrank: None,
    };
    match mode {
        InterferenceMode::Dense => {
            if n > dense_cap {
                return Err(Error::DenseTooLarge { n, cap: dense_cap });
            }
            let mut raw = Vec::with_capacity(n * n);
            for i in 0..n {
                let mut s = InterferenceHandle::row_stream(rng.seed(), i);
                for _ in 0..n {
                    raw.push(s.next_normal());
                }
            }
            handle.dense = Some(raw);
        }
        InterferenceMode::Streamed => {}
        InterferenceMode::LowRank => {
            handle.lowrank = Some(LowRankState::default());
        }
    }
    Ok(handle)
}

/// Interaction signal `g_j = alpha w_j + beta y_j + gamma w_j y_j`.
fn interaction_signal(y_prev: &[f64], w_t: &[u8], params: &StructuralParams) -> Vec<f64> {
    y_prev
        .iter()
        .zip(w_t)
        .map(|(&y, &w)| {
            let w = w as f64;
            params.alpha * w + params.beta * y + params.gamma * w * y
        })
        .collect()
}

/// One round of the outcome dynamics.
///
/// `t` is the 1-based round index; the per-(unit, round) noise and per-round
/// interference deviates are keyed by `(i, t)` only, so parallel worlds that
/// share `rng` reuse them (common random numbers).
pub fn step(
    y_prev: &[f64],
    w_t: &[u8],
    handle: &mut InterferenceHandle,
    params: &StructuralParams,
    types: &TypeAssignment,
    t: usize,
    rng: &RngContext,
) -> Result<Vec<f64>> {
    let n = handle.n();
    if y_prev.len() != n || w_t.len() != n || types.u.len() != n {
        return Err(Error::Dimension(format!(
            "step inputs must have length {n}"
        )));
    }
    if y_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("previous outcomes"));
    }

    let g = interaction_signal(y_prev, w_t, params);
    let sum_g: f64 = g.iter().sum();
    let mean_g = sum_g / n as f64;
    let norm_g = l2_norm(&g);
    let loads = handle.fixed_loads(&g);

    let sigma_t = params.sigma_time_at(t);
    let z_scale = sigma_t * norm_g / (n as f64).sqrt();

    let mut y_next = Vec::with_capacity(n);
    for i in 0..n {
        let human = types.u[i] == 1;
        let base = if human { params.delta_h } else { params.delta_a };
        let tau = if human { params.tau_h } else { params.tau_a };
        let w = w_t[i] as f64;
        let mut y = base + tau * w + handle.row_mu[i] * mean_g + loads[i];
        if z_scale != 0.0 {
            y += z_scale * rng.normal(&[tags::INTERFERENCE_TIME, i as u64, t as u64]);
        }
        if params.noise_sd != 0.0 {
            y += params.noise_sd * rng.normal(&[tags::NOISE, i as u64, t as u64]);
        }
        y_next.push(y);
    }
    Ok(y_next)
}

/// Simulate one full scenario: pre-treatment outcomes, then `T` rounds.
pub fn run_scenario(
    config: &PopulationConfig,
    params: &StructuralParams,
    types: &TypeAssignment,
    handle: &mut InterferenceHandle,
    plan: &TreatmentPlan,
    rng: &RngContext,
) -> Result<Panel> {
    let n = config.n_units;
    let t_total = plan.t_total();
    if t_total != config.t_total() {
        return Err(Error::Dimension(format!(
            "plan covers {t_total} rounds, config expects {}",
            config.t_total()
        )));
    }
    plan.validate(config.t_warmup)?;

    let w = assign_treatments(plan, n, rng);
    let mut y = ndarray::Array2::<f64>::zeros((n, t_total + 1));
    for i in 0..n {
        y[[i, 0]] = params.init_mean + params.init_sd * rng.normal(&[tags::INIT_OUTCOME, i as u64]);
    }
    let mut y_prev: Vec<f64> = (0..n).map(|i| y[[i, 0]]).collect();
    for t in 1..=t_total {
        let w_col: Vec<u8> = (0..n).map(|i| w[[i, t - 1]]).collect();
        let y_next = step(&y_prev, &w_col, handle, params, types, t, rng)?;
        for i in 0..n {
            y[[i, t]] = y_next[i];
        }
        y_prev = y_next;
    }
    Ok(Panel {
        y,
        w,
        q: types.q.clone(),
        scenario: plan.scenario,
        seed: rng.seed(),
    })
}

/// Control, treatment, and experiment panels branched from a shared warmup
/// trajectory, with fixed interference and per-(unit, round) deviates shared
/// across the branches.
#[derive(Debug, Clone)]
pub struct WorldSet {
    pub control: Panel,
    pub treatment: Panel,
    pub experiment: Panel,
    pub types: TypeAssignment,
    /// Outcome vector at the end of warmup.
    pub warmup_state: Vec<f64>,
}

/// Run the three parallel scenarios.
///
/// Branch order is fixed (control, treatment, experiment) so that on-demand
/// interference realizations are reproducible. Warmup rounds carry no
/// treatment in any branch and all deviates are world-independent, so the
/// warmup columns agree bitwise.
pub fn run_parallel_worlds(
    config: &PopulationConfig,
    params: &StructuralParams,
    types: &TypeAssignment,
    handle: &mut InterferenceHandle,
    experiment_plan: &TreatmentPlan,
    rng: &RngContext,
) -> Result<WorldSet> {
    let control_plan = TreatmentPlan::control(config.t_warmup, config.t_main);
    let treatment_plan = TreatmentPlan::treatment(config.t_warmup, config.t_main);
    let control = run_scenario(config, params, types, handle, &control_plan, rng)?;
    let treatment = run_scenario(config, params, types, handle, &treatment_plan, rng)?;
    let experiment = run_scenario(config, params, types, handle, experiment_plan, rng)?;
    let warmup_state = (0..config.n_units)
        .map(|i| control.y[[i, config.t_warmup]])
        .collect();
    Ok(WorldSet {
        control,
        treatment,
        experiment,
        types: types.clone(),
        warmup_state,
    })
}

/// Monte Carlo ground truth: per-round mean over true humans of the
/// treatment-world minus control-world outcome. Reads latent types; for
/// evaluation only.
pub fn ground_truth_tte(worlds: &WorldSet) -> Result<EffectSeries> {
    let humans: Vec<usize> = worlds
        .types
        .u
        .iter()
        .enumerate()
        .filter(|(_, &u)| u == 1)
        .map(|(i, _)| i)
        .collect();
    if humans.is_empty() {
        return Err(Error::NoHumans);
    }
    let t1 = worlds.treatment.y.ncols();
    let mut values = Vec::with_capacity(t1);
    for t in 0..t1 {
        let mut acc = 0.0;
        for &i in &humans {
            acc += worlds.treatment.y[[i, t]] - worlds.control.y[[i, t]];
        }
        values.push(acc / humans.len() as f64);
    }
    Ok(EffectSeries { values })
}

/// Population-average analogue of [`ground_truth_tte`].
pub fn ground_truth_tte_population(worlds: &WorldSet) -> EffectSeries {
    let n = worlds.treatment.y.nrows();
    let t1 = worlds.treatment.y.ncols();
    let mut values = Vec::with_capacity(t1);
    for t in 0..t1 {
        let mut acc = 0.0;
        for i in 0..n {
            acc += worlds.treatment.y[[i, t]] - worlds.control.y[[i, t]];
        }
        values.push(acc / n as f64);
    }
    EffectSeries { values }
}

/// Ground truth restricted to AI units.
pub fn ground_truth_tte_ai(worlds: &WorldSet) -> Result<EffectSeries> {
    let ais: Vec<usize> = worlds
        .types
        .u
        .iter()
        .enumerate()
        .filter(|(_, &u)| u == 0)
        .map(|(i, _)| i)
        .collect();
    if ais.is_empty() {
        return Err(Error::NoHumans);
    }
    let t1 = worlds.treatment.y.ncols();
    let mut values = Vec::with_capacity(t1);
    for t in 0..t1 {
        let mut acc = 0.0;
        for &i in &ais {
            acc += worlds.treatment.y[[i, t]] - worlds.control.y[[i, t]];
        }
        values.push(acc / ais.len() as f64);
    }
    Ok(EffectSeries { values })
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Write a panel as CSV rows `(scenario, seed, unit_id, t, w, y, q)`, one row
/// per (unit, round); round 0 carries treatment 0.
pub fn write_panel_csv<W: Write>(panel: &Panel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "seed", "unit_id", "t", "w", "y", "q"])?;
    let label = panel.scenario.label();
    let seed = panel.seed.to_string();
    for i in 0..panel.n_units() {
        for t in 0..panel.y.ncols() {
            let w_it = if t == 0 { 0 } else { panel.w[[i, t - 1]] };
            w.write_record([
                label,
                &seed,
                &i.to_string(),
                &t.to_string(),
                &w_it.to_string(),
                &panel.y[[i, t]].to_string(),
                &panel.q[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a panel back from the CSV layout written by [`write_panel_csv`].
pub fn read_panel_csv<R: std::io::Read>(input: R) -> Result<Panel> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows: Vec<(String, u64, usize, usize, u8, f64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push((
            rec[0].to_string(),
            rec[1].parse().map_err(|_| Error::Schema("bad seed".into()))?,
            rec[2].parse().map_err(|_| Error::Schema("bad unit_id".into()))?,
            rec[3].parse().map_err(|_| Error::Schema("bad t".into()))?,
            rec[4].parse().map_err(|_| Error::Schema("bad w".into()))?,
            rec[5].parse().map_err(|_| Error::Schema("bad y".into()))?,
            rec[6].parse().map_err(|_| Error::Schema("bad q".into()))?,
        ));
    }
    if rows.is_empty() {
        return Err(Error::Schema("empty panel file".into()));
    }
    let n = rows.iter().map(|r| r.2).max().unwrap() + 1;
    let t_max = rows.iter().map(|r| r.3).max().unwrap();
    let scenario = match rows[0].0.as_str() {
        "control" => crate::model::Scenario::Control,
        "treatment" => crate::model::Scenario::Treatment,
        "experiment" => crate::model::Scenario::Experiment,
        _ => crate::model::Scenario::Custom,
    };
    let seed = rows[0].1;
    let mut y = ndarray::Array2::<f64>::zeros((n, t_max + 1));
    let mut w = ndarray::Array2::<u8>::zeros((n, t_max));
    let mut q = vec![0.0; n];
    for (_, _, i, t, w_it, y_it, q_i) in rows {
        y[[i, t]] = y_it;
        if t > 0 {
            w[[i, t - 1]] = w_it;
        }
        q[i] = q_i;
    }
    let panel = Panel {
        y,
        w,
        q,
        scenario,
        seed,
    };
    panel.validate()?;
    Ok(panel)
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Export a world set: three panel CSVs plus a JSON run manifest carrying a
/// config echo, the seed, the interference mode, and content hashes of the
/// panel files.
pub fn export_worldset(
    worlds: &WorldSet,
    dir: &Path,
    config_echo: &serde_json::Value,
    mode: InterferenceMode,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut hashes = serde_json::Map::new();
    for (name, panel) in [
        ("control", &worlds.control),
        ("treatment", &worlds.treatment),
        ("experiment", &worlds.experiment),
    ] {
        let mut buf = Vec::new();
        write_panel_csv(panel, &mut buf)?;
        std::fs::write(dir.join(format!("{name}.csv")), &buf)?;
        hashes.insert(name.to_string(), serde_json::Value::String(sha256_hex(&buf)));
    }
    let manifest = serde_json::json!({
        "config": config_echo,
        "seed": worlds.experiment.seed,
        "interference_mode": mode,
        "noise_sharing": "common random numbers across branches",
        "panel_hashes": hashes,
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
