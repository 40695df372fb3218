//! Rule-based reproduction of a discussion-platform experiment: threaded
//! content with popularity-weighted feeds, an in-feed success-story
//! treatment, and behaviorally opposed human/AI users.
//!
//! Outcomes are engagement counts in `{0..4}` (non-skip actions over a
//! four-thread feed) and panels come out in the same shape as the synthetic
//! dynamics, so the whole estimation stack runs unchanged. The external
//! text-generation backend of [`llm`] replaces the behavior tables with
//! model-generated actions over a JSON contract; it is never exercised by
//! the test suite.

pub mod kernel;
pub mod llm;
pub mod persona;

pub use kernel::{Action, BehaviorKernel, MoodBucket, Valence};
pub use persona::{Persona, UnitType};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gen_priors_classifier, EffectSeries, Panel, PopulationConfig, PriorQualityConfig, Scenario,
    TreatmentPlan, TypeAssignment,
};
use crate::rng::{tags, RngContext, Stream};

/// Sampling-weight floor so zero-reply threads stay reachable
/// (`log(0 + 1) = 0` would make fresh threads unsampleable).
pub const WEIGHT_FLOOR: f64 = 0.069_314_718_055_994_53; // ln(2) / 10

pub const FEED_SIZE: usize = 4;

/// One discussion thread. Sponsored content never lives in the pool and
/// never accumulates replies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thread {
    pub id: usize,
    pub author: usize,
    pub valence: Valence,
    pub reply_count: u32,
}

/// Carry-over state of one user.
#[derive(Debug, Clone)]
pub struct UserState {
    pub mood: u8,
    pub persona: Persona,
}

/// A feed slot: an organic thread from the pool, or the sponsored
/// success-story slot injected by treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedSlot {
    Organic(usize),
    Sponsored,
}

/// Mutable platform state: personas, the organic thread pool, and moods.
#[derive(Debug, Clone)]
pub struct Platform {
    pub users: Vec<UserState>,
    pub threads: Vec<Thread>,
}

impl Platform {
    pub fn n_units(&self) -> usize {
        self.users.len()
    }

    pub fn types(&self) -> Vec<u8> {
        self.users
            .iter()
            .map(|u| (u.persona.unit_type == UnitType::Human) as u8)
            .collect()
    }
}

/// Initialize personas and one seed thread per user: positive for human
/// authors, negative for AI authors. Moods start at the kernel's per-type
/// initial level.
pub fn init_platform(
    n_units: usize,
    human_fraction: f64,
    kernel: &BehaviorKernel,
    rng: &RngContext,
) -> Platform {
    let split = crate::model::draw_types_fixed_split(n_units, human_fraction, rng);
    let users: Vec<UserState> = (0..n_units)
        .map(|i| {
            let unit_type = if split[i] == 1 {
                UnitType::Human
            } else {
                UnitType::Ai
            };
            UserState {
                mood: kernel.for_type(unit_type).initial_mood,
                persona: persona::sample_persona(i, unit_type, rng),
            }
        })
        .collect();
    let threads = users
        .iter()
        .enumerate()
        .map(|(i, u)| Thread {
            id: i,
            author: i,
            valence: match u.persona.unit_type {
                UnitType::Human => Valence::Positive,
                UnitType::Ai => Valence::Negative,
            },
            reply_count: 0,
        })
        .collect();
    Platform { users, threads }
}

fn thread_weight(reply_count: u32) -> f64 {
    ((reply_count + 1) as f64).ln() + WEIGHT_FLOOR
}

/// Four threads sampled without replacement with probability proportional to
/// `log(reply_count + 1)` (plus the floor), excluding the user's own seed
/// thread.
pub fn sample_feed(platform: &Platform, user: usize, stream: &mut Stream) -> Result<Vec<FeedSlot>> {
    let candidates: Vec<usize> = (0..platform.threads.len()).filter(|&t| t != user).collect();
    if candidates.len() < FEED_SIZE {
        return Err(Error::Config(format!(
            "thread pool of {} too small for a {FEED_SIZE}-slot feed",
            candidates.len()
        )));
    }
    let mut weights: Vec<f64> = candidates
        .iter()
        .map(|&t| thread_weight(platform.threads[t].reply_count))
        .collect();
    let mut picked = Vec::with_capacity(FEED_SIZE);
    let mut total: f64 = weights.iter().sum();
    let mut taken = vec![false; candidates.len()];
    for _ in 0..FEED_SIZE {
        let mut target = stream.next_f64() * total;
        let mut chosen = None;
        for (j, &cand) in candidates.iter().enumerate() {
            if taken[j] {
                continue;
            }
            if target < weights[j] {
                chosen = Some((j, cand));
                break;
            }
            target -= weights[j];
        }
        // Guard against accumulated rounding at the tail.
        let (j, cand) = chosen.unwrap_or_else(|| {
            let j = (0..candidates.len()).rev().find(|&j| !taken[j]).unwrap();
            (j, candidates[j])
        });
        taken[j] = true;
        total -= weights[j];
        weights[j] = 0.0;
        picked.push(FeedSlot::Organic(cand));
    }
    Ok(picked)
}

/// Replace a uniformly random slot with the sponsored success-story thread.
pub fn apply_treatment(mut feed: Vec<FeedSlot>, treated: bool, stream: &mut Stream) -> Vec<FeedSlot> {
    if treated {
        let slot = stream.next_below(feed.len());
        feed[slot] = FeedSlot::Sponsored;
    }
    feed
}

/// Per-user round result before the commit.
#[derive(Debug, Clone)]
pub struct UserRound {
    pub actions: Vec<Action>,
    /// Non-skip count, the engagement outcome in `{0..4}`.
    pub outcome: u8,
    pub new_mood: u8,
    /// Organic threads that received a reply.
    pub replies: Vec<usize>,
}

/// Draw one action per feed slot against the start-of-round pool snapshot,
/// count non-skips, and update mood from the exposure mix.
pub fn user_act(
    state: &UserState,
    feed: &[FeedSlot],
    platform: &Platform,
    kernel: &BehaviorKernel,
    ambient: f64,
    stream: &mut Stream,
) -> UserRound {
    let tk = kernel.for_type(state.persona.unit_type);
    let bucket = kernel::mood_bucket(state.mood);
    let mut actions = Vec::with_capacity(feed.len());
    let mut replies = Vec::new();
    let mut outcome = 0u8;
    let (mut n_pos, mut n_neg, mut n_spon) = (0usize, 0usize, 0usize);
    for slot in feed {
        let valence = match slot {
            FeedSlot::Organic(t) => platform.threads[*t].valence,
            FeedSlot::Sponsored => Valence::Sponsored,
        };
        match valence {
            Valence::Positive => n_pos += 1,
            Valence::Negative => n_neg += 1,
            Valence::Sponsored => n_spon += 1,
        }
        let action = tk
            .cell(valence, bucket)
            .with_engagement_shift(kernel.ambient.engagement_weight * ambient)
            .draw(stream.next_f64());
        if action != Action::Skip {
            outcome += 1;
        }
        if action == Action::Reply {
            if let FeedSlot::Organic(t) = slot {
                replies.push(*t);
            }
        }
        actions.push(action);
    }
    let new_mood =
        kernel::update_mood(state.mood, &tk.mood, n_pos, n_neg, n_spon, ambient, stream.next_f64());
    UserRound {
        actions,
        outcome,
        new_mood,
        replies,
    }
}

/// Run one platform round against a treatment column. User actions are
/// computed from the start-of-round snapshot in unit order, then reply
/// counts are committed once.
fn run_round(
    platform: &mut Platform,
    kernel: &BehaviorKernel,
    w_col: &[u8],
    round: usize,
    rng: &RngContext,
) -> Result<Vec<u8>> {
    let n = platform.n_units();
    let snapshot = platform.clone();
    let ambient = kernel.ambient.level_at(round, rng);
    let mut outcomes = Vec::with_capacity(n);
    let mut reply_increments = vec![0u32; snapshot.threads.len()];
    let mut new_moods = Vec::with_capacity(n);
    for i in 0..n {
        let mut feed_stream = rng.stream(&[tags::FEED, i as u64, round as u64]);
        let feed = sample_feed(&snapshot, i, &mut feed_stream)?;
        let mut slot_stream = rng.stream(&[tags::TREATMENT_SLOT, i as u64, round as u64]);
        let feed = apply_treatment(feed, w_col[i] == 1, &mut slot_stream);
        let mut action_stream = rng.stream(&[tags::ACTION, i as u64, round as u64]);
        let result = user_act(&snapshot.users[i], &feed, &snapshot, kernel, ambient, &mut action_stream);
        for &t in &result.replies {
            reply_increments[t] += 1;
        }
        outcomes.push(result.outcome);
        new_moods.push(result.new_mood);
    }
    for (t, inc) in reply_increments.iter().enumerate() {
        platform.threads[t].reply_count += inc;
    }
    for (i, m) in new_moods.into_iter().enumerate() {
        platform.users[i].mood = m;
    }
    Ok(outcomes)
}

fn run_branch(
    start: &Platform,
    kernel: &BehaviorKernel,
    w: &ndarray::Array2<u8>,
    y: &mut ndarray::Array2<f64>,
    t_start: usize,
    rng: &RngContext,
) -> Result<()> {
    let n = start.n_units();
    let mut platform = start.clone();
    for t in t_start..=w.ncols() {
        let w_col: Vec<u8> = (0..n).map(|i| w[[i, t - 1]]).collect();
        let outcomes = run_round(&mut platform, kernel, &w_col, t, rng)?;
        for i in 0..n {
            y[[i, t]] = outcomes[i] as f64;
        }
    }
    Ok(())
}

/// Full platform experiment: shared round 0 and warmup, then control,
/// treatment, and experiment branches from the same state snapshot, with
/// feed/action/slot deviates shared across branches by (unit, round) keys.
pub fn run_platform(
    config: &PopulationConfig,
    prior_quality: &PriorQualityConfig,
    kernel: &BehaviorKernel,
    experiment_plan: &TreatmentPlan,
    rng: &RngContext,
) -> Result<crate::dynamics::WorldSet> {
    kernel.validate()?;
    config.validate()?;
    let n = config.n_units;
    let t_total = config.t_total();
    if experiment_plan.t_total() != t_total {
        return Err(Error::Dimension(format!(
            "plan covers {} rounds, config expects {t_total}",
            experiment_plan.t_total()
        )));
    }
    experiment_plan.validate(config.t_warmup)?;

    let mut platform = init_platform(n, config.human_fraction, kernel, rng);
    let u = platform.types();
    let q = gen_priors_classifier(&u, prior_quality, rng)?;
    let types = TypeAssignment { u, q: q.clone() };

    let control_plan = TreatmentPlan::control(config.t_warmup, config.t_main);
    let treatment_plan = TreatmentPlan::treatment(config.t_warmup, config.t_main);
    let w_control = crate::model::assign_treatments(&control_plan, n, rng);
    let w_treatment = crate::model::assign_treatments(&treatment_plan, n, rng);
    let w_experiment = crate::model::assign_treatments(experiment_plan, n, rng);

    let mut y_control = ndarray::Array2::<f64>::zeros((n, t_total + 1));
    let mut y_treatment = ndarray::Array2::<f64>::zeros((n, t_total + 1));
    let mut y_experiment = ndarray::Array2::<f64>::zeros((n, t_total + 1));

    // Round 0 (pre-treatment browsing) and warmup rounds are shared.
    let zeros = vec![0u8; n];
    let y0 = run_round(&mut platform, kernel, &zeros, 0, rng)?;
    for i in 0..n {
        y_control[[i, 0]] = y0[i] as f64;
        y_treatment[[i, 0]] = y0[i] as f64;
        y_experiment[[i, 0]] = y0[i] as f64;
    }
    for t in 1..=config.t_warmup {
        let outcomes = run_round(&mut platform, kernel, &zeros, t, rng)?;
        for i in 0..n {
            y_control[[i, t]] = outcomes[i] as f64;
            y_treatment[[i, t]] = outcomes[i] as f64;
            y_experiment[[i, t]] = outcomes[i] as f64;
        }
    }
    let warmup_state: Vec<f64> = (0..n).map(|i| y_control[[i, config.t_warmup]]).collect();

    // Branches restart from the shared warmup snapshot.
    run_branch(&platform, kernel, &w_control, &mut y_control, config.t_warmup + 1, rng)?;
    run_branch(&platform, kernel, &w_treatment, &mut y_treatment, config.t_warmup + 1, rng)?;
    run_branch(&platform, kernel, &w_experiment, &mut y_experiment, config.t_warmup + 1, rng)?;

    let panel = |y: ndarray::Array2<f64>, w: ndarray::Array2<u8>, scenario: Scenario| Panel {
        y,
        w,
        q: q.clone(),
        scenario,
        seed: rng.seed(),
    };
    Ok(crate::dynamics::WorldSet {
        control: panel(y_control, w_control, Scenario::Control),
        treatment: panel(y_treatment, w_treatment, Scenario::Treatment),
        experiment: panel(y_experiment, w_experiment, experiment_plan.scenario),
        types,
        warmup_state,
    })
}

/// Ground-truth per-type mean effects over the post-warmup rounds, for
/// calibration checks.
pub fn post_warmup_mean(series: &EffectSeries, t_warmup: usize) -> f64 {
    series.mean_over(t_warmup + 1, series.len_rounds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ground_truth_tte, ground_truth_tte_ai, ground_truth_tte_population};

    fn ctx(seed: u64) -> RngContext {
        RngContext::new(seed)
    }

    fn bench_config(n: usize, seed: u64) -> PopulationConfig {
        PopulationConfig {
            n_units: n,
            t_warmup: 4,
            t_main: 12,
            seed,
            human_fraction: 0.5,
            prior_mode: crate::model::PriorMode::Classifier,
            p_u: None,
        }
    }

    fn prior_cfg() -> PriorQualityConfig {
        PriorQualityConfig {
            accuracy: 0.8,
            noise_sd: 0.15,
        }
    }

    #[test]
    fn init_splits_threads_by_type() {
        let kernel = BehaviorKernel::default();
        let p = init_platform(200, 0.5, &kernel, &ctx(1));
        let pos = p.threads.iter().filter(|t| t.valence == Valence::Positive).count();
        let neg = p.threads.iter().filter(|t| t.valence == Valence::Negative).count();
        assert_eq!((pos, neg), (100, 100));
        let all_pos = init_platform(50, 1.0, &kernel, &ctx(2));
        assert!(all_pos.threads.iter().all(|t| t.valence == Valence::Positive));
    }

    #[test]
    fn init_is_deterministic() {
        let kernel = BehaviorKernel::default();
        let a = init_platform(60, 0.5, &kernel, &ctx(3));
        let b = init_platform(60, 0.5, &kernel, &ctx(3));
        for (x, y) in a.users.iter().zip(&b.users) {
            assert_eq!(x.persona.name, y.persona.name);
            assert_eq!(x.mood, y.mood);
        }
    }

    #[test]
    fn feed_excludes_own_thread_and_fills_small_pool() {
        let kernel = BehaviorKernel::default();
        let p = init_platform(5, 0.4, &kernel, &ctx(4));
        let mut s = ctx(4).stream(&[tags::FEED, 0, 0]);
        let feed = sample_feed(&p, 0, &mut s).unwrap();
        assert_eq!(feed.len(), 4);
        let mut ids: Vec<usize> = feed
            .iter()
            .map(|slot| match slot {
                FeedSlot::Organic(t) => *t,
                FeedSlot::Sponsored => unreachable!(),
            })
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![1, 2, 3, 4], "feed must be the whole pool minus self");
    }

    #[test]
    fn feed_pool_too_small_errors() {
        let kernel = BehaviorKernel::default();
        let p = init_platform(4, 0.5, &kernel, &ctx(5));
        let mut s = ctx(5).stream(&[tags::FEED, 0, 0]);
        assert!(sample_feed(&p, 0, &mut s).is_err());
    }

    #[test]
    fn feed_weights_follow_popularity() {
        // One heavily replied thread should appear in nearly every feed.
        let kernel = BehaviorKernel::default();
        let mut p = init_platform(30, 0.5, &kernel, &ctx(6));
        p.threads[7].reply_count = 100_000;
        let mut hits = 0;
        let draws = 2000;
        for r in 0..draws {
            let mut s = ctx(6).stream(&[tags::FEED, 1, r]);
            let feed = sample_feed(&p, 1, &mut s).unwrap();
            if feed.contains(&FeedSlot::Organic(7)) {
                hits += 1;
            }
        }
        let rate = hits as f64 / draws as f64;
        assert!(rate > 0.95, "hot thread inclusion rate {rate}");
        // And the weight itself is strictly increasing in replies.
        assert!(thread_weight(1) > thread_weight(0));
        assert!(thread_weight(10) > thread_weight(9));
    }

    #[test]
    fn feed_uniform_when_counts_equal() {
        // Without reply differentiation every candidate is equally likely.
        let kernel = BehaviorKernel::default();
        let p = init_platform(9, 0.5, &kernel, &ctx(7));
        let mut counts = vec![0usize; 9];
        let draws = 6000;
        for r in 0..draws {
            let mut s = ctx(7).stream(&[tags::FEED, 0, r]);
            for slot in sample_feed(&p, 0, &mut s).unwrap() {
                if let FeedSlot::Organic(t) = slot {
                    counts[t] += 1;
                }
            }
        }
        let expect = draws as f64 * 4.0 / 8.0;
        for (t, &c) in counts.iter().enumerate() {
            if t == 0 {
                assert_eq!(c, 0);
                continue;
            }
            let rel = (c as f64 - expect).abs() / expect;
            assert!(rel < 0.08, "thread {t} count {c} vs {expect}");
        }
    }

    #[test]
    fn treatment_slot_is_uniform() {
        let feed0 = vec![
            FeedSlot::Organic(1),
            FeedSlot::Organic(2),
            FeedSlot::Organic(3),
            FeedSlot::Organic(4),
        ];
        // Untreated feeds pass through unchanged.
        let mut s = ctx(8).stream(&[tags::TREATMENT_SLOT, 0, 0]);
        assert_eq!(apply_treatment(feed0.clone(), false, &mut s), feed0);

        let mut slot_counts = [0usize; 4];
        for r in 0..10_000u64 {
            let mut s = ctx(8).stream(&[tags::TREATMENT_SLOT, 1, r]);
            let feed = apply_treatment(feed0.clone(), true, &mut s);
            let spons: Vec<usize> = feed
                .iter()
                .enumerate()
                .filter(|(_, f)| **f == FeedSlot::Sponsored)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(spons.len(), 1, "exactly one sponsored slot");
            slot_counts[spons[0]] += 1;
        }
        for &c in &slot_counts {
            let rate = c as f64 / 10_000.0;
            assert!((rate - 0.25).abs() < 0.02, "slot rate {rate}");
        }
    }

    #[test]
    fn degenerate_kernels_pin_outcomes() {
        let mut all_skip = BehaviorKernel::default();
        let skip = kernel::ActionProbs {
            reply: 0.0,
            like: 0.0,
            skip: 1.0,
        };
        for cell in all_skip
            .human
            .positive
            .iter_mut()
            .chain(all_skip.human.negative.iter_mut())
            .chain(all_skip.human.sponsored.iter_mut())
        {
            *cell = skip;
        }
        let p = init_platform(10, 1.0, &all_skip, &ctx(9));
        let mut s = ctx(9).stream(&[tags::ACTION, 0, 0]);
        let feed = vec![FeedSlot::Organic(1), FeedSlot::Organic(2), FeedSlot::Organic(3), FeedSlot::Sponsored];
        let r = user_act(&p.users[0], &feed, &p, &all_skip, 0.0, &mut s);
        assert_eq!(r.outcome, 0);
        assert!(r.replies.is_empty());

        let mut all_reply = BehaviorKernel::default();
        let reply = kernel::ActionProbs {
            reply: 1.0,
            like: 0.0,
            skip: 0.0,
        };
        for cell in all_reply
            .human
            .positive
            .iter_mut()
            .chain(all_reply.human.negative.iter_mut())
            .chain(all_reply.human.sponsored.iter_mut())
        {
            *cell = reply;
        }
        let r = user_act(&p.users[0], &feed, &p, &all_reply, 0.0, &mut s);
        assert_eq!(r.outcome, 4);
        // Sponsored replies never hit the pool.
        assert_eq!(r.replies.len(), 3);
    }

    #[test]
    fn outcomes_stay_in_support() {
        let cfg = bench_config(60, 10);
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let worlds =
            run_platform(&cfg, &prior_cfg(), &BehaviorKernel::default(), &plan, &ctx(10)).unwrap();
        for panel in [&worlds.control, &worlds.treatment, &worlds.experiment] {
            for &y in panel.y.iter() {
                assert!(y >= 0.0 && y <= 4.0 && y.fract() == 0.0, "outcome {y}");
            }
        }
    }

    #[test]
    fn warmup_is_shared_and_pool_size_constant() {
        let cfg = bench_config(50, 11);
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let worlds =
            run_platform(&cfg, &prior_cfg(), &BehaviorKernel::default(), &plan, &ctx(11)).unwrap();
        for t in 0..=4 {
            for i in 0..50 {
                assert_eq!(worlds.control.y[[i, t]], worlds.treatment.y[[i, t]]);
                assert_eq!(worlds.control.y[[i, t]], worlds.experiment.y[[i, t]]);
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = bench_config(40, 12);
        let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
        let a = run_platform(&cfg, &prior_cfg(), &BehaviorKernel::default(), &plan, &ctx(12)).unwrap();
        let b = run_platform(&cfg, &prior_cfg(), &BehaviorKernel::default(), &plan, &ctx(12)).unwrap();
        assert_eq!(a.experiment.y, b.experiment.y);
        assert_eq!(a.experiment.w, b.experiment.w);
    }

    #[test]
    fn default_kernel_effect_structure() {
        // Opposing type-level effects with a small population average,
        // averaged over a few seeds at the benchmark shape.
        let mut human = 0.0;
        let mut ai = 0.0;
        let mut pop = 0.0;
        let seeds = [0u64, 1, 2, 3];
        for &seed in &seeds {
            let cfg = bench_config(200, seed);
            let plan = TreatmentPlan::experiment(4, 12, &[0.2, 0.5, 0.8]);
            let worlds =
                run_platform(&cfg, &prior_cfg(), &BehaviorKernel::default(), &plan, &ctx(seed))
                    .unwrap();
            human += post_warmup_mean(&ground_truth_tte(&worlds).unwrap(), 4);
            ai += post_warmup_mean(&ground_truth_tte_ai(&worlds).unwrap(), 4);
            pop += post_warmup_mean(&ground_truth_tte_population(&worlds), 4);
        }
        let k = seeds.len() as f64;
        human /= k;
        ai /= k;
        pop /= k;
        assert!(human > 0.3, "human effect {human}");
        assert!(ai < 0.0, "ai effect {ai}");
        assert!(pop.abs() < 0.15, "population effect {pop}");
    }
}
