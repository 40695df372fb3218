//! Scratch: inspect one agentsim fit in detail.
use mixpop::agentsim::{run_platform, BehaviorKernel};
use mixpop::estimator::{estimate_tte_h, EstimatorOptions};
use mixpop::model::*;
use mixpop::rng::RngContext;
use mixpop::subpop::{construct_batches, summarize, SubpopConfig};

fn main() {
    for seed in 0..10u64 {
        let cfg = PopulationConfig {
            n_units: 200, t_warmup: 4, t_main: 12, seed,
            human_fraction: 0.5, prior_mode: PriorMode::Classifier, p_u: None,
        };
        let prior = PriorQualityConfig { accuracy: 0.8, noise_sd: 0.15 };
        let rng = RngContext::new(seed);
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let worlds = run_platform(&cfg, &prior, &BehaviorKernel::default(), &plan, &rng).unwrap();
        let panel = &worlds.experiment;
        let batches = construct_batches(&panel.q, &panel.w, 4, &SubpopConfig { block_size: 25, random_size: 25, ..SubpopConfig::default() }, &rng).unwrap();
        let (_s, pop) = summarize(panel, &batches);
        let est = estimate_tte_h(panel, &batches, &EstimatorOptions { treatment_start: 5, ..EstimatorOptions::default() }).unwrap();
        println!("seed {seed}: K = {}, rank = {}, cond = {:.1e}", batches.len(), est.fit.design_rank, est.fit.condition_estimate);
        println!("  pop y_path: {:?}", pop.y_path.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
        let th = est.fit.theta_hat;
        println!("  theta: dH {:.2} dA {:.2} tH {:.2} tA {:.2} aB {:.2} bB {:.2} gB {:.2}", th.delta_h, th.delta_a, th.tau_h, th.tau_a, th.alpha_bar, th.beta_bar, th.gamma_bar);
        println!("  effect tail: {:?}", est.effect.values[13..].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}
