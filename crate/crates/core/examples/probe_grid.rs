//! Scratch: grid scan of ambient parameters and batch sizes.

use mixpop::agentsim::{run_platform, BehaviorKernel};
use mixpop::baselines;
use mixpop::dynamics::ground_truth_tte;
use mixpop::estimator::{estimate_tte_h, EstimatorOptions};
use mixpop::model::*;
use mixpop::rng::RngContext;
use mixpop::subpop::{construct_batches, SubpopConfig};

fn run(kernel: &BehaviorKernel, block: usize, random: usize) -> (usize, f64, f64, f64, f64, f64) {
    let prior = PriorQualityConfig {
        accuracy: 0.8,
        noise_sd: 0.15,
    };
    let mut wins = 0;
    let mut alg1_tot = 0.0;
    let mut cmpb_est_tot = 0.0;
    let mut cmpb_worst: f64 = 0.0;
    let mut human_tot = 0.0;
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let cfg = PopulationConfig {
            n_units: 200,
            t_warmup: 4,
            t_main: 12,
            seed,
            human_fraction: 0.5,
            prior_mode: PriorMode::Classifier,
            p_u: None,
        };
        let rng = RngContext::new(seed);
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let worlds = run_platform(&cfg, &prior, kernel, &plan, &rng).unwrap();
        let truth = ground_truth_tte(&worlds).unwrap();
        let panel = &worlds.experiment;
        let sub_cfg = SubpopConfig {
            block_size: block,
            random_size: random,
            ..SubpopConfig::default()
        };
        let batches = construct_batches(&panel.q, &panel.w, 4, &sub_cfg, &rng).unwrap();
        let est = estimate_tte_h(panel, &batches, &EstimatorOptions { treatment_start: 5, ..EstimatorOptions::default() }).unwrap();
        let mae = |s: &EffectSeries| {
            (5..=16).map(|t| (s.values[t] - truth.values[t]).abs()).sum::<f64>() / 12.0
        };
        let m_alg1 = mae(&est.effect);
        let baselines_mae = [
            mae(&baselines::dim(panel).effect),
            mae(&baselines::dim_filtered(panel, baselines::FilterRule::Fixed(0.5)).unwrap().effect),
            mae(&baselines::ht_q(panel).effect),
            mae(&baselines::cmp_basic(panel, 5).unwrap().effect),
            mae(&baselines::cmp_full(panel, &batches, 5).unwrap().effect),
        ];
        if baselines_mae.iter().all(|b| m_alg1 < *b) {
            wins += 1;
        }
        alg1_tot += m_alg1;
        worst = worst.max(m_alg1);
        let cmpb = baselines::cmp_basic(panel, 5).unwrap();
        let cmpb_est = (5..=16).map(|t| cmpb.effect.values[t]).sum::<f64>() / 12.0;
        cmpb_est_tot += cmpb_est;
        cmpb_worst = cmpb_worst.max(cmpb_est.abs());
        human_tot += (5..=16).map(|t| truth.values[t]).sum::<f64>() / 12.0;
    }
    (wins, alg1_tot / 10.0, worst, cmpb_est_tot / 10.0, cmpb_worst, human_tot / 10.0)
}

fn main() {
    for &(persistence, shock) in &[(0.70, 0.30), (0.70, 0.35), (0.70, 0.40), (0.75, 0.35), (0.65, 0.35)] {
        let mut kernel = BehaviorKernel::default();
        kernel.ambient.persistence = persistence;
        kernel.ambient.shock_sd = shock;
        let (wins, mean_mae, worst, cmpb_mean, cmpb_worst, human) = run(&kernel, 20, 30);
        println!(
            "persist {persistence:.2} shock {shock:.2}: wins {wins}/10, alg1 mae {mean_mae:.3}/{worst:.3}, cmpb {cmpb_mean:+.3} (worst |{cmpb_worst:.3}|), human {human:+.3}"
        );
    }
}
