//! Scratch: cmp_basic fitted coefficients per seed.
use mixpop::agentsim::{run_platform, BehaviorKernel};
use mixpop::model::*;
use mixpop::rng::RngContext;
use nalgebra::{DMatrix, DVector};

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
        let pi = panel.treatment_means(None);
        let ybar = panel.outcome_means(None);
        let rows: Vec<f64> = (1..=16)
            .flat_map(|t| vec![pi[t - 1], ybar[t - 1], pi[t - 1] * ybar[t - 1]])
            .collect();
        let x = DMatrix::from_row_slice(16, 3, &rows);
        let y = DVector::from_iterator(16, (1..=16).map(|t| ybar[t]));
        let svd = x.svd(true, true);
        let beta = svd.solve(&y, 1e-12).unwrap();
        let (l, xi, g) = (beta[0], beta[1], beta[2]);
        println!(
            "seed {seed}: lambda {l:+.3} xi {xi:+.3} gamma {g:+.3} | memory(pi=1) {:+.3} | resp(at L=1.9) {:+.3}",
            xi + g,
            l + 1.9 * g
        );
    }
}
