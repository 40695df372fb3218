//! Scratch probe: estimator error vs population size.

use mixpop::dynamics::{build_interference, run_scenario, InterferenceMode};
use mixpop::ese::{analytic_tte_h, reduce_params};
use mixpop::estimator::{estimate_tte_h, EstimatorOptions};
use mixpop::model::*;
use mixpop::rng::RngContext;
use mixpop::subpop::{construct_batches, SubpopConfig};

fn main() {
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
    let opts = EstimatorOptions::default();
    for n in [2000usize, 8000, 32000] {
        let mut errs = Vec::new();
        let t0 = std::time::Instant::now();
        for seed in 0..20u64 {
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
                build_interference(&params, &types.u, InterferenceMode::LowRank, &rng, 20_000)
                    .unwrap();
            let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
            let panel = run_scenario(&cfg, &params, &types, &mut handle, &plan, &rng).unwrap();
            let batches =
                construct_batches(&panel.q, &panel.w, 4, &SubpopConfig::default(), &rng).unwrap();
            let est = estimate_tte_h(&panel, &batches, &opts).unwrap();
            let theta = reduce_params(&params, est.q_bar);
            let truth = analytic_tte_h(&theta, est.q_bar, params.init_mean, 16).unwrap();
            errs.push((est.effect.values[16] - truth.values[16]).abs());
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errs[errs.len() / 2];
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        println!(
            "n = {n:6}: median |err(T)| = {median:.4}, mean = {mean:.4}, max = {:.4}, rel = {:.3}%, elapsed {:?}",
            errs.last().unwrap(),
            100.0 * median / 1.9742,
            t0.elapsed()
        );
    }
}
