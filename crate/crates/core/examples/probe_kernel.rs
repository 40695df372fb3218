//! Scratch probe: agentsim ground-truth effects and baseline footprints.

use mixpop::agentsim::{post_warmup_mean, run_platform, BehaviorKernel};
use mixpop::baselines;
use mixpop::dynamics::{ground_truth_tte, ground_truth_tte_ai, ground_truth_tte_population};
use mixpop::estimator::{estimate_tte_h, EstimatorOptions};
use mixpop::model::*;
use mixpop::rng::RngContext;
use mixpop::subpop::{construct_batches, SubpopConfig};

fn main() {
    let kernel = BehaviorKernel::default();
    let prior = PriorQualityConfig {
        accuracy: 0.8,
        noise_sd: 0.15,
    };
    let n_seeds = 10u64;
    let (mut h, mut a, mut p) = (0.0, 0.0, 0.0);
    let mut mae_alg1 = Vec::new();
    let mut mae_dim = Vec::new();
    let mut est_rows: Vec<Vec<f64>> = Vec::new();
    for seed in 0..n_seeds {
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
        let worlds = run_platform(&cfg, &prior, &kernel, &plan, &rng).unwrap();
        let truth = ground_truth_tte(&worlds).unwrap();
        let truth_ai = ground_truth_tte_ai(&worlds).unwrap();
        let truth_pop = ground_truth_tte_population(&worlds);
        h += post_warmup_mean(&truth, 4) / n_seeds as f64;
        a += post_warmup_mean(&truth_ai, 4) / n_seeds as f64;
        p += post_warmup_mean(&truth_pop, 4) / n_seeds as f64;

        let panel = &worlds.experiment;
        let batches =
            construct_batches(
                &panel.q,
                &panel.w,
                4,
                &SubpopConfig { block_size: 20, random_size: 30, ..SubpopConfig::default() },
                &rng,
            )
            .unwrap();
        let est = estimate_tte_h(panel, &batches, &EstimatorOptions { treatment_start: 5, ..EstimatorOptions::default() }).unwrap();
        let dim = baselines::dim(panel);
        let dimf = baselines::dim_filtered(panel, baselines::FilterRule::Fixed(0.5)).unwrap();
        let htq = baselines::ht_q(panel);
        let cmpb = baselines::cmp_basic(panel, 5).unwrap();
        let cmpf = baselines::cmp_full(panel, &batches, 5).unwrap();
        let mae = |series: &EffectSeries| {
            (5..=16)
                .map(|t| (series.values[t] - truth.values[t]).abs())
                .sum::<f64>()
                / 12.0
        };
        let est_tte = |series: &EffectSeries| (5..=16).map(|t| series.values[t]).sum::<f64>() / 12.0;
        mae_alg1.push(mae(&est.effect));
        mae_dim.push(mae(&dim.effect));
        est_rows.push(vec![
            est_tte(&est.effect),
            est_tte(&dim.effect),
            est_tte(&dimf.effect),
            est_tte(&htq.effect),
            est_tte(&cmpb.effect),
            est_tte(&cmpf.effect),
            mae(&est.effect),
            mae(&dim.effect),
            mae(&dimf.effect),
            mae(&htq.effect),
            mae(&cmpb.effect),
            mae(&cmpf.effect),
        ]);
    }
    println!("ground truth post-warmup means: human {h:.3}, ai {a:.3}, pop {p:.3}");
    let cols = [
        "est_alg1", "est_dim", "est_dimf", "est_htq", "est_cmpb", "est_cmpf", "mae_alg1",
        "mae_dim", "mae_dimf", "mae_htq", "mae_cmpb", "mae_cmpf",
    ];
    for (c, name) in cols.iter().enumerate() {
        let mean = est_rows.iter().map(|r| r[c]).sum::<f64>() / est_rows.len() as f64;
        println!("{name:9}: mean {mean:+.3}");
    }
    let wins = mae_alg1
        .iter()
        .zip(est_rows.iter())
        .filter(|(m, row)| row[7..12].iter().all(|b| *m < b))
        .count();
    let _ = mae_dim;
    println!("alg1 beats every baseline MAE on {wins}/{n_seeds} seeds");
    for (i, row) in est_rows.iter().enumerate() {
        println!(
            "seed {i}: alg1 mae {:.3} vs dim {:.3} dimf {:.3} htq {:.3} cmpb {:.3} cmpf {:.3}",
            row[6], row[7], row[8], row[9], row[10], row[11]
        );
    }
}

#[allow(dead_code)]
fn debug_one_seed() {}
