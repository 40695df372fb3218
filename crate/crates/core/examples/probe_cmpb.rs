//! Scratch: per-seed cmp_basic behavior and population trajectory.
use mixpop::agentsim::{run_platform, BehaviorKernel};
use mixpop::baselines;
use mixpop::model::*;
use mixpop::rng::RngContext;

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
        let ybar = panel.outcome_means(None);
        let cmpb = baselines::cmp_basic(panel, 5).unwrap();
        let est = (5..=16).map(|t| cmpb.effect.values[t]).sum::<f64>() / 12.0;
        println!(
            "seed {seed}: cmpb est {est:+.3} | ybar {:?}",
            ybar.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
}
