//! End-to-end estimation of the human total treatment effect from aggregate
//! subpopulation trajectories: design-matrix assembly, least-squares fit of
//! the reduced parameter vector, identifiability diagnostics, and
//! counterfactual propagation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ese::{self, CounterfactualPaths, HumanMemory, ThetaReduced};
use crate::model::{EffectSeries, Panel};
use crate::subpop::{self, SubpopSummary, Subpopulation};

/// Stacked regression system with one row per (batch, round).
///
/// Row layout: `[q_k, 1-q_k, q_k*pi_kt, (1-q_k)*pi_kt, pi_t, y_{t-1},
/// pi_t*y_{t-1}]` where `pi_t` and `y_{t-1}` are population summaries — the
/// memory regressor is always the population mean, not the batch mean.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    /// Row-major `(rows.len() x 7)`.
    pub rows: Vec<[f64; 7]>,
    pub response: Vec<f64>,
    /// `(batch index, round)` per row.
    pub row_index: Vec<(usize, usize)>,
}

/// Cross-variation witness: two compositions and two exposure levels whose
/// four combinations occur among the batch summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossVariation {
    pub pass: bool,
    pub q_low: f64,
    pub q_high: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// Determinant of the induced 4x4 submatrix `[1, q, p, qp]`.
    pub det_z4: f64,
}

/// Temporal non-degeneracy: numerical rank of the `T x 3` population matrix
/// with rows `[pi_t, y_{t-1}, pi_t*y_{t-1}]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalCheck {
    pub pass: bool,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub cross_variation: CrossVariation,
    pub temporal: TemporalCheck,
}

impl IdentifiabilityReport {
    pub fn pass(&self) -> bool {
        self.cross_variation.pass && self.temporal.pass
    }
}

/// Least-squares fit outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub theta_hat: ThetaReduced,
    pub residual_sum_squares: f64,
    pub design_rank: usize,
    /// Ratio of the largest to the smallest retained singular value.
    pub condition_estimate: f64,
    pub rank_deficient: bool,
    pub identifiability: Option<IdentifiabilityReport>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Estimation options; defaults follow the benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Inclusive 1-based round range used for fitting; `None` means all
    /// rounds `1..=T` (warmup rounds still inform the baseline and memory
    /// coefficients).
    pub fit_window: Option<(usize, usize)>,
    /// Fail instead of falling back to the minimum-norm solution when the
    /// design is rank deficient or the identifiability checks fail.
    pub strict: bool,
    pub human_memory: HumanMemory,
    /// Round at which the counterfactual intervention switches on (1 is the
    /// estimation algorithm's literal form; set to `t_warmup + 1` to match a
    /// design whose treatment begins after warmup).
    pub treatment_start: usize,
    /// Minimum composition separation for the cross-variation witness.
    pub q_gap: f64,
    /// Minimum exposure separation for the cross-variation witness.
    pub p_gap: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            fit_window: None,
            strict: false,
            human_memory: HumanMemory::PopulationPath,
            treatment_start: 1,
            q_gap: 0.05,
            p_gap: 0.05,
        }
    }
}

fn resolve_window(window: Option<(usize, usize)>, t_total: usize) -> Result<(usize, usize)> {
    let (lo, hi) = window.unwrap_or((1, t_total));
    if lo < 1 || hi > t_total || lo > hi {
        return Err(Error::Config(format!(
            "fit window {lo}..={hi} outside 1..={t_total}"
        )));
    }
    Ok((lo, hi))
}

/// Assemble the regression system from batch and population summaries.
pub fn build_design(
    summaries: &[SubpopSummary],
    pop: &SubpopSummary,
    fit_window: Option<(usize, usize)>,
) -> Result<DesignSystem> {
    let t_total = pop.pi_path.len();
    let (lo, hi) = resolve_window(fit_window, t_total)?;
    let mut rows = Vec::new();
    let mut response = Vec::new();
    let mut row_index = Vec::new();
    for (k, s) in summaries.iter().enumerate() {
        if s.pi_path.len() != t_total || s.y_path.len() != t_total + 1 {
            return Err(Error::Dimension(format!(
                "batch {k} summary does not match population horizon {t_total}"
            )));
        }
        for t in lo..=hi {
            let q = s.q_k;
            let pi_kt = s.rate_at(t);
            let pi_t = pop.rate_at(t);
            let y_prev = pop.y_path[t - 1];
            rows.push([
                q,
                1.0 - q,
                q * pi_kt,
                (1.0 - q) * pi_kt,
                pi_t,
                y_prev,
                pi_t * y_prev,
            ]);
            response.push(s.y_path[t]);
            row_index.push((k, t));
        }
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design system"));
    }
    Ok(DesignSystem {
        rows,
        response,
        row_index,
    })
}

fn numerical_rank(singular_values: &[f64], max_dim: usize) -> (usize, f64) {
    let s_max = singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = max_dim as f64 * f64::EPSILON * s_max;
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    (rank, tol)
}

/// Solve the least-squares problem by SVD. Full rank yields the unique
/// minimizer; otherwise the minimum-norm solution is returned with the
/// rank-deficiency flag set.
pub fn fit_theta(design: &DesignSystem) -> Result<FitReport> {
    let n_rows = design.rows.len();
    if n_rows < 7 {
        return Err(Error::TooFewRows {
            rows: n_rows,
            cols: 7,
        });
    }
    let flat: Vec<f64> = design.rows.iter().flatten().copied().collect();
    let x = DMatrix::from_row_slice(n_rows, 7, &flat);
    let y = DVector::from_column_slice(&design.response);

    let svd = x.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let (rank, tol) = numerical_rank(&sv, n_rows.max(7));
    let retained_min = sv
        .iter()
        .copied()
        .filter(|&s| s > tol)
        .fold(f64::INFINITY, f64::min);
    let s_max = sv.iter().copied().fold(0.0_f64, f64::max);
    let condition = if retained_min.is_finite() && retained_min > 0.0 {
        s_max / retained_min
    } else {
        0.0
    };

    let theta_vec = svd
        .solve(&y, tol)
        .map_err(|e| Error::Config(format!("svd solve failed: {e}")))?;
    let mut arr = [0.0; 7];
    for i in 0..7 {
        arr[i] = theta_vec[i];
    }
    let theta_hat = ThetaReduced::from_array(arr);
    let residual = &x * &theta_vec - &y;
    let rss = residual.dot(&residual);

    Ok(FitReport {
        theta_hat,
        residual_sum_squares: rss,
        design_rank: rank,
        condition_estimate: condition,
        rank_deficient: rank < 7,
        identifiability: None,
    })
}

/// Assumption checks on the observed summaries.
///
/// (i) Cross-variation: search for batch pairs separated by at least `q_gap`
/// in composition whose trajectories each span at least `p_gap` in exposure;
/// report the witness with the largest `|det Z4|`. (ii) Temporal
/// non-degeneracy: numerical rank 3 of the population `[pi, y_prev, pi*y_prev]`
/// matrix over the window.
pub fn check_identifiability(
    summaries: &[SubpopSummary],
    pop: &SubpopSummary,
    fit_window: Option<(usize, usize)>,
    q_gap: f64,
    p_gap: f64,
) -> Result<IdentifiabilityReport> {
    let t_total = pop.pi_path.len();
    let (lo, hi) = resolve_window(fit_window, t_total)?;

    // (i) cross-variation witness.
    let spread = |s: &SubpopSummary| {
        let mut p_min = f64::INFINITY;
        let mut p_max = f64::NEG_INFINITY;
        for t in lo..=hi {
            p_min = p_min.min(s.rate_at(t));
            p_max = p_max.max(s.rate_at(t));
        }
        (p_min, p_max)
    };
    let mut best: Option<CrossVariation> = None;
    for (a, sa) in summaries.iter().enumerate() {
        for sb in summaries.iter().skip(a + 1) {
            let dq = (sa.q_k - sb.q_k).abs();
            if dq < q_gap {
                continue;
            }
            let (a_min, a_max) = spread(sa);
            let (b_min, b_max) = spread(sb);
            if a_max - a_min < p_gap || b_max - b_min < p_gap {
                continue;
            }
            // det of [[1,qa,pa,qa*pa],[1,qa,pA,qa*pA],[1,qb,pb,qb*pb],
            // [1,qb,pB,qb*pB]] = (pA-pa)*(pB-pb)*(qb-qa)^2 up to sign.
            let det = (a_max - a_min) * (b_max - b_min) * (sa.q_k - sb.q_k).powi(2);
            if best.as_ref().map_or(true, |b| det.abs() > b.det_z4.abs()) {
                let (q_low, q_high) = if sa.q_k <= sb.q_k {
                    (sa.q_k, sb.q_k)
                } else {
                    (sb.q_k, sa.q_k)
                };
                best = Some(CrossVariation {
                    pass: true,
                    q_low,
                    q_high,
                    p_low: a_min.min(b_min),
                    p_high: a_max.max(b_max),
                    det_z4: det,
                });
            }
        }
    }
    let cross_variation = best.unwrap_or(CrossVariation {
        pass: false,
        q_low: f64::NAN,
        q_high: f64::NAN,
        p_low: f64::NAN,
        p_high: f64::NAN,
        det_z4: 0.0,
    });

    // (ii) temporal non-degeneracy.
    let mut m = Vec::with_capacity((hi - lo + 1) * 3);
    for t in lo..=hi {
        let pi = pop.rate_at(t);
        let y_prev = pop.y_path[t - 1];
        m.extend_from_slice(&[pi, y_prev, pi * y_prev]);
    }
    let mat = DMatrix::from_row_slice(hi - lo + 1, 3, &m);
    let svd = mat.svd(false, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let (rank, _) = numerical_rank(&sv, (hi - lo + 1).max(3));
    let temporal = TemporalCheck {
        pass: rank == 3,
        rank,
        singular_values: sv,
    };

    Ok(IdentifiabilityReport {
        cross_variation,
        temporal,
    })
}

/// Step-III propagation at a fitted parameter vector: population paths under
/// full treatment/control at composition `q_bar`, human readouts at
/// composition 1, and their per-round difference.
pub fn propagate_counterfactuals(
    theta_hat: &ThetaReduced,
    q_bar: f64,
    y0: f64,
    t_max: usize,
    human_memory: HumanMemory,
) -> Result<CounterfactualPaths> {
    ese::counterfactual_paths(theta_hat, q_bar, y0, t_max, human_memory)
}

/// [`propagate_counterfactuals`] with the intervention starting at
/// `treat_from`.
pub fn propagate_counterfactuals_from(
    theta_hat: &ThetaReduced,
    q_bar: f64,
    y0: f64,
    t_max: usize,
    treat_from: usize,
    human_memory: HumanMemory,
) -> Result<CounterfactualPaths> {
    ese::counterfactual_paths_from(theta_hat, q_bar, y0, t_max, treat_from, human_memory)
}

/// Full estimate from a panel and pre-built batches.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub effect: EffectSeries,
    pub fit: FitReport,
    pub paths: CounterfactualPaths,
    pub q_bar: f64,
}

/// Compose summaries, design, fit, diagnostics, and propagation.
///
/// Rank deficiency downgrades to a flagged minimum-norm fit unless
/// `opts.strict` is set, in which case it is an error, as is a failed
/// identifiability check.
pub fn estimate_tte_h(
    panel: &Panel,
    batches: &[Subpopulation],
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    panel.validate()?;
    let (summaries, pop) = subpop::summarize(panel, batches);
    let diag = check_identifiability(&summaries, &pop, opts.fit_window, opts.q_gap, opts.p_gap)?;
    if opts.strict && !diag.pass() {
        return Err(Error::Identifiability(format!(
            "cross_variation pass = {}, temporal rank = {}",
            diag.cross_variation.pass, diag.temporal.rank
        )));
    }
    let design = build_design(&summaries, &pop, opts.fit_window)?;
    let mut fit = fit_theta(&design)?;
    if opts.strict && fit.rank_deficient {
        return Err(Error::RankDeficient {
            rank: fit.design_rank,
            cols: 7,
        });
    }
    fit.identifiability = Some(diag);
    let t_total = pop.pi_path.len();
    let paths = propagate_counterfactuals_from(
        &fit.theta_hat,
        pop.q_k,
        pop.y_path[0],
        t_total,
        opts.treatment_start.max(1),
        opts.human_memory,
    )?;
    Ok(EstimateResult {
        effect: paths.tte_h.clone(),
        fit,
        paths,
        q_bar: pop.q_k,
    })
}

/// Effect-series CSV export `(t, tte_hat)`.
pub fn write_effect_csv<W: Write>(series: &EffectSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "tte_hat"])?;
    for (t, v) in series.values.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ese::{analytic_tte_h, ese_batch_trajectory, ese_trajectory, reduce_params};
    use crate::model::StructuralParams;
    use approx::assert_abs_diff_eq;

    fn theta_star() -> ThetaReduced {
        ThetaReduced::from_array([0.5, -0.2, 1.0, -0.8, 0.3, 0.5, 0.1])
    }

    /// Noiseless summaries generated exactly from the state evolution.
    fn synthetic_summaries(
        theta: &ThetaReduced,
        q_levels: &[f64],
        t_total: usize,
    ) -> (Vec<SubpopSummary>, SubpopSummary) {
        let pop_pi: Vec<f64> = (0..t_total)
            .map(|t| match t {
                0 | 1 => 0.0,
                2 | 3 => 0.2,
                4 | 5 => 0.5,
                _ => 0.8,
            })
            .collect();
        let q_bar = q_levels.iter().sum::<f64>() / q_levels.len() as f64;
        let nu0 = 0.5;
        let pop_traj = ese_trajectory(theta, q_bar, &pop_pi, &pop_pi, nu0, t_total).unwrap();
        let mut summaries = Vec::new();
        for (b, &q) in q_levels.iter().enumerate() {
            for scale in [0.5, 1.5] {
                let pi_s: Vec<f64> = pop_pi.iter().map(|p| (p * scale).min(1.0)).collect();
                let y = ese_batch_trajectory(theta, q, &pi_s, &pop_traj).unwrap();
                summaries.push(SubpopSummary {
                    q_k: q,
                    pi_path: pi_s,
                    y_path: y,
                    size: 100 + b,
                });
            }
        }
        let pop_summary = SubpopSummary {
            q_k: q_bar,
            pi_path: pop_pi,
            y_path: pop_traj.nu.clone(),
            size: 1000,
        };
        (summaries, pop_summary)
    }

    #[test]
    fn design_row_count_and_window() {
        let (summaries, pop) = synthetic_summaries(&theta_star(), &[0.2, 0.8], 8);
        let one = build_design(&summaries[..1], &pop, Some((3, 5))).unwrap();
        assert_eq!(one.rows.len(), 3);
        assert_eq!(one.row_index, vec![(0, 3), (0, 4), (0, 5)]);
        assert!(build_design(&summaries, &pop, Some((5, 3))).is_err());
        assert!(build_design(&summaries, &pop, Some((0, 5))).is_err());
    }

    #[test]
    fn noiseless_generation_satisfies_design_identity() {
        let theta = theta_star();
        let (summaries, pop) = synthetic_summaries(&theta, &[0.2, 0.8], 8);
        let design = build_design(&summaries, &pop, None).unwrap();
        let arr = theta.as_array();
        for (row, y) in design.rows.iter().zip(&design.response) {
            let pred: f64 = row.iter().zip(&arr).map(|(x, t)| x * t).sum();
            assert_abs_diff_eq!(pred, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_recovery_from_noiseless_design() {
        let theta = theta_star();
        let (summaries, pop) = synthetic_summaries(&theta, &[0.2, 0.8], 8);
        let diag = check_identifiability(&summaries, &pop, None, 0.05, 0.05).unwrap();
        assert!(diag.pass(), "{diag:?}");
        let design = build_design(&summaries, &pop, None).unwrap();
        let fit = fit_theta(&design).unwrap();
        assert_eq!(fit.design_rank, 7);
        assert!(!fit.rank_deficient);
        let err = fit
            .theta_hat
            .as_array()
            .iter()
            .zip(theta.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(err <= 1e-8, "recovery error {err:.3e}");
        assert!(fit.residual_sum_squares < 1e-16);
    }

    #[test]
    fn constant_composition_collapses_rank() {
        let theta = theta_star();
        let (summaries, pop) = synthetic_summaries(&theta, &[0.5, 0.5], 8);
        let design = build_design(&summaries, &pop, None).unwrap();
        let fit = fit_theta(&design).unwrap();
        assert!(fit.design_rank <= 5, "rank {}", fit.design_rank);
        assert!(fit.rank_deficient);
    }

    #[test]
    fn zero_response_gives_zero_theta() {
        let (summaries, pop) = synthetic_summaries(&theta_star(), &[0.2, 0.8], 8);
        let mut design = build_design(&summaries, &pop, None).unwrap();
        design.response.iter_mut().for_each(|v| *v = 0.0);
        let fit = fit_theta(&design).unwrap();
        for v in fit.theta_hat.as_array() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let (summaries, pop) = synthetic_summaries(&theta_star(), &[0.2, 0.8], 8);
        let design = build_design(&summaries[..1], &pop, Some((1, 3))).unwrap();
        assert!(matches!(
            fit_theta(&design),
            Err(Error::TooFewRows { rows: 3, cols: 7 })
        ));
    }

    #[test]
    fn identifiability_two_strata_two_phases_pass() {
        let (summaries, pop) = synthetic_summaries(&theta_star(), &[0.2, 0.8], 8);
        let diag = check_identifiability(&summaries, &pop, None, 0.05, 0.05).unwrap();
        assert!(diag.cross_variation.pass);
        assert!((diag.cross_variation.q_high - diag.cross_variation.q_low) >= 0.05);
        assert!(diag.det_z4_is_consistent());
    }

    impl IdentifiabilityReport {
        fn det_z4_is_consistent(&self) -> bool {
            let c = &self.cross_variation;
            !c.pass || c.det_z4.abs() > 0.0
        }
    }

    #[test]
    fn identifiability_fails_without_composition_gap() {
        let (summaries, pop) = synthetic_summaries(&theta_star(), &[0.5, 0.5], 8);
        let diag = check_identifiability(&summaries, &pop, None, 0.05, 0.05).unwrap();
        assert!(!diag.cross_variation.pass);
    }

    #[test]
    fn identifiability_fails_on_constant_rates() {
        let theta = theta_star();
        let t_total = 6;
        let pop_pi = vec![0.5; t_total];
        let pop_traj = ese_trajectory(&theta, 0.5, &pop_pi, &pop_pi, 0.5, t_total).unwrap();
        let pop = SubpopSummary {
            q_k: 0.5,
            pi_path: pop_pi.clone(),
            y_path: pop_traj.nu.clone(),
            size: 100,
        };
        let summaries = vec![pop.clone()];
        let diag = check_identifiability(&summaries, &pop, None, 0.05, 0.05).unwrap();
        assert!(!diag.temporal.pass);
        assert!(diag.temporal.rank <= 2);
    }

    #[test]
    fn propagation_trivial_cases() {
        // All treatment-linked entries zero: zero series.
        let th = ThetaReduced::from_array([0.5, -0.2, 0.0, 0.0, 0.0, 0.4, 0.0]);
        let paths = propagate_counterfactuals(&th, 0.5, 1.0, 6, HumanMemory::PopulationPath).unwrap();
        for v in &paths.tte_h.values {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        // Direct human effect only: constant tau_h.
        let th = ThetaReduced::from_array([0.1, 0.2, 0.7, -0.3, 0.0, 0.0, 0.0]);
        let paths = propagate_counterfactuals(&th, 0.5, 1.0, 6, HumanMemory::PopulationPath).unwrap();
        for &v in &paths.tte_h.values[1..] {
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn propagation_at_true_theta_matches_analytic_oracle() {
        let theta = theta_star();
        let paths =
            propagate_counterfactuals(&theta, 0.5, 0.5, 10, HumanMemory::PopulationPath).unwrap();
        let oracle = analytic_tte_h(&theta, 0.5, 0.5, 10).unwrap();
        for (a, b) in paths.tte_h.values.iter().zip(&oracle.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    /// Simulated panel in the theorem-faithful prior regime
    /// (`u_i ~ Bernoulli(q_i)`), where the estimator is consistent.
    fn simulated_estimate(
        n: usize,
        seed: u64,
        opts: &EstimatorOptions,
    ) -> (EstimateResult, StructuralParams) {
        use crate::dynamics::{build_interference, run_scenario, InterferenceMode};
        use crate::model::*;
        use crate::rng::RngContext;
        let params = StructuralParams {
            delta_h: 0.5,
            delta_a: -0.2,
            tau_h: 1.0,
            tau_a: -0.8,
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.1,
            mu_h: 1.0,
            mu_a: 1.0,
            sigma_fixed: 0.5,
            sigma_time: 0.25,
            sigma_time_schedule: None,
            noise_sd: 0.25,
            init_mean: 0.5,
            init_sd: 0.5,
            stability_cap: 0.95,
        };
        let cfg = PopulationConfig {
            n_units: n,
            t_warmup: 4,
            t_main: 12,
            seed,
            human_fraction: 0.5,
            prior_mode: PriorMode::ModelFaithful,
            p_u: Some(PriorSpec::TwoPoint {
                lo: 0.2,
                hi: 0.8,
                weight_hi: 0.5,
            }),
        };
        let rng = RngContext::new(seed);
        let types = draw_types_model(n, cfg.p_u.as_ref().unwrap(), &rng).unwrap();
        let mut handle =
            build_interference(&params, &types.u, InterferenceMode::LowRank, &rng, 20_000).unwrap();
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let panel = run_scenario(&cfg, &params, &types, &mut handle, &plan, &rng).unwrap();
        let batches = crate::subpop::construct_batches(
            &panel.q,
            &panel.w,
            4,
            &crate::subpop::SubpopConfig::default(),
            &rng,
        )
        .unwrap();
        let est = estimate_tte_h(&panel, &batches, opts).unwrap();
        (est, params)
    }

    #[test]
    fn estimate_tracks_analytic_truth_on_simulated_panel() {
        let opts = EstimatorOptions::default();
        let (est, params) = simulated_estimate(8000, 42, &opts);
        assert!(est.fit.identifiability.as_ref().unwrap().pass());
        assert_eq!(est.fit.design_rank, 7);
        let theta = reduce_params(&params, est.q_bar);
        let truth = analytic_tte_h(&theta, est.q_bar, params.init_mean, 16).unwrap();
        let final_err = (est.effect.values[16] - truth.values[16]).abs();
        assert!(
            final_err < 0.15,
            "final-round error {final_err:.3} (estimate {:.3}, truth {:.3})",
            est.effect.values[16],
            truth.values[16]
        );
    }

    #[test]
    fn estimate_consistency_improves_with_n() {
        let opts = EstimatorOptions::default();
        let err_at = |n: usize| {
            let mut errs: Vec<f64> = (0..5)
                .map(|s| {
                    let (est, params) = simulated_estimate(n, 100 + s, &opts);
                    let theta = reduce_params(&params, est.q_bar);
                    let truth = analytic_tte_h(&theta, est.q_bar, params.init_mean, 16).unwrap();
                    (est.effect.values[16] - truth.values[16]).abs()
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            errs[2]
        };
        let (small, large) = (err_at(1000), err_at(16_000));
        assert!(
            large < small,
            "median error should fall with N: {small:.4} -> {large:.4}"
        );
    }

    /// Simulated panel plus batches for invariance tests.
    fn simulated_panel(n: usize, seed: u64) -> (Panel, Vec<Subpopulation>) {
        use crate::dynamics::{build_interference, run_scenario, InterferenceMode};
        use crate::model::*;
        use crate::rng::RngContext;
        let params = StructuralParams {
            delta_h: 0.5,
            delta_a: -0.2,
            tau_h: 1.0,
            tau_a: -0.8,
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.1,
            mu_h: 1.0,
            mu_a: 1.0,
            sigma_fixed: 0.5,
            sigma_time: 0.25,
            sigma_time_schedule: None,
            noise_sd: 0.25,
            init_mean: 0.5,
            init_sd: 0.5,
            stability_cap: 0.95,
        };
        let cfg = PopulationConfig {
            n_units: n,
            t_warmup: 4,
            t_main: 12,
            seed,
            human_fraction: 0.5,
            prior_mode: PriorMode::ModelFaithful,
            p_u: Some(PriorSpec::TwoPoint {
                lo: 0.2,
                hi: 0.8,
                weight_hi: 0.5,
            }),
        };
        let rng = RngContext::new(seed);
        let types = draw_types_model(n, cfg.p_u.as_ref().unwrap(), &rng).unwrap();
        let mut handle =
            build_interference(&params, &types.u, InterferenceMode::LowRank, &rng, 20_000).unwrap();
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let panel = run_scenario(&cfg, &params, &types, &mut handle, &plan, &rng).unwrap();
        let batches = crate::subpop::construct_batches(
            &panel.q,
            &panel.w,
            4,
            &crate::subpop::SubpopConfig::default(),
            &rng,
        )
        .unwrap();
        (panel, batches)
    }

    #[test]
    fn permutation_invariance() {
        let opts = EstimatorOptions::default();
        let n = 600;
        let (panel, batches) = simulated_panel(n, 7);
        let est = estimate_tte_h(&panel, &batches, &opts).unwrap();

        let perm = |i: usize| n - 1 - i;
        let mut y = ndarray::Array2::<f64>::zeros((n, 17));
        let mut w = ndarray::Array2::<u8>::zeros((n, 16));
        let mut qv = vec![0.0; n];
        for i in 0..n {
            qv[perm(i)] = panel.q[i];
            for t in 0..=16 {
                y[[perm(i), t]] = panel.y[[i, t]];
            }
            for t in 0..16 {
                w[[perm(i), t]] = panel.w[[i, t]];
            }
        }
        let permuted_panel = Panel {
            y,
            w,
            q: qv,
            scenario: panel.scenario,
            seed: panel.seed,
        };
        let permuted_batches: Vec<Subpopulation> = batches
            .iter()
            .map(|b| {
                let mut idx: Vec<usize> = b.indices.iter().map(|&i| perm(i)).collect();
                idx.sort_unstable();
                Subpopulation {
                    indices: idx,
                    stratum_id: b.stratum_id,
                    anchor_rank: b.anchor_rank,
                }
            })
            .collect();
        let est_perm = estimate_tte_h(&permuted_panel, &permuted_batches, &opts).unwrap();
        for (a, b) in est
            .fit
            .theta_hat
            .as_array()
            .iter()
            .zip(est_perm.fit.theta_hat.as_array())
        {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        for (a, b) in est.effect.values.iter().zip(&est_perm.effect.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn scale_equivariance() {
        let opts = EstimatorOptions::default();
        let (panel, batches) = simulated_panel(600, 8);
        let est = estimate_tte_h(&panel, &batches, &opts).unwrap();

        let mut scaled_panel = panel.clone();
        scaled_panel.y.mapv_inplace(|v| 3.0 * v);
        let est_scaled = estimate_tte_h(&scaled_panel, &batches, &opts).unwrap();

        let a = est.fit.theta_hat;
        let b = est_scaled.fit.theta_hat;
        // Level and direct coefficients scale; memory coefficients do not.
        assert_abs_diff_eq!(3.0 * a.delta_h, b.delta_h, epsilon = 1e-6);
        assert_abs_diff_eq!(3.0 * a.delta_a, b.delta_a, epsilon = 1e-6);
        assert_abs_diff_eq!(3.0 * a.tau_h, b.tau_h, epsilon = 1e-6);
        assert_abs_diff_eq!(3.0 * a.tau_a, b.tau_a, epsilon = 1e-6);
        assert_abs_diff_eq!(3.0 * a.alpha_bar, b.alpha_bar, epsilon = 1e-6);
        assert_abs_diff_eq!(a.beta_bar, b.beta_bar, epsilon = 1e-8);
        assert_abs_diff_eq!(a.gamma_bar, b.gamma_bar, epsilon = 1e-8);
        // The effect series scales exactly by the outcome scale.
        for (x, y) in est.effect.values.iter().zip(&est_scaled.effect.values) {
            assert_abs_diff_eq!(3.0 * x, *y, epsilon = 1e-6);
        }
    }

    #[test]
    fn strict_mode_rejects_rank_deficiency() {
        let theta = theta_star();
        let (summaries, pop) = synthetic_summaries(&theta, &[0.5, 0.5], 8);
        // Manufacture a panel-free strict failure through fit: emulate via
        // estimate options on a constant-prior simulated panel.
        let design = build_design(&summaries, &pop, None).unwrap();
        let fit = fit_theta(&design).unwrap();
        assert!(fit.rank_deficient);
    }

    #[test]
    fn fit_report_serializes() {
        let theta = theta_star();
        let (summaries, pop) = synthetic_summaries(&theta, &[0.2, 0.8], 8);
        let design = build_design(&summaries, &pop, None).unwrap();
        let mut fit = fit_theta(&design).unwrap();
        fit.identifiability =
            Some(check_identifiability(&summaries, &pop, None, 0.05, 0.05).unwrap());
        let json = fit.to_json().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(parsed["theta_hat"]["tau_h"].is_number());
        assert_eq!(parsed["design_rank"], 7);
    }

    #[test]
    fn effect_csv_format() {
        let series = EffectSeries::from_values(vec![0.0, 0.5, 0.6]);
        let mut buf = Vec::new();
        write_effect_csv(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,tte_hat\n0,0\n1,0.5\n2,0.6\n");
    }
}
