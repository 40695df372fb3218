//! Behavior tables driving the rule-based users.
//!
//! Each (unit type, thread valence, mood bucket) cell holds reply/like/skip
//! probabilities; mood evolves deterministically from feed exposure counts.
//! The defaults are calibrated so that the success-story treatment lifts
//! human engagement mostly through the mood carry-over channel (small
//! same-round footprint) while cynical AI users disengage from it, producing
//! opposing type-level effects that nearly cancel in the population average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::persona::UnitType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Positive,
    Negative,
    Sponsored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Reply,
    Like,
    Skip,
}

/// Mood buckets: 0-1 low, 2 mid, 3-4 high.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoodBucket {
    Low,
    Mid,
    High,
}

pub fn mood_bucket(mood: u8) -> MoodBucket {
    match mood {
        0 | 1 => MoodBucket::Low,
        2 => MoodBucket::Mid,
        _ => MoodBucket::High,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActionProbs {
    pub reply: f64,
    pub like: f64,
    pub skip: f64,
}

impl ActionProbs {
    pub fn non_skip(&self) -> f64 {
        self.reply + self.like
    }

    fn validate(&self) -> Result<()> {
        let sum = self.reply + self.like + self.skip;
        if self.reply < 0.0 || self.like < 0.0 || self.skip < 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "action probabilities ({}, {}, {}) must be nonnegative and sum to 1",
                self.reply, self.like, self.skip
            )));
        }
        Ok(())
    }

    /// Draw an action from a uniform deviate.
    pub fn draw(&self, u: f64) -> Action {
        if u < self.reply {
            Action::Reply
        } else if u < self.reply + self.like {
            Action::Like
        } else {
            Action::Skip
        }
    }

    /// Shift the non-skip mass by `shift`, rescaling reply and like
    /// proportionally. Keeps a floor and ceiling so cells stay proper.
    pub fn with_engagement_shift(&self, shift: f64) -> ActionProbs {
        let base = self.non_skip();
        if base <= 0.0 {
            return *self;
        }
        let target = (base + shift).clamp(0.02, 0.95);
        let f = target / base;
        ActionProbs {
            reply: self.reply * f,
            like: self.like * f,
            skip: 1.0 - target,
        }
    }
}

fn probs(reply: f64, like: f64, skip: f64) -> ActionProbs {
    ActionProbs { reply, like, skip }
}

/// Additive mood drift per exposure in the feed, plus a mean-reverting pull
/// toward the type's baseline level. Reversion keeps aggregate engagement
/// dynamics stable (treatment lifts mood only while it keeps arriving).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MoodWeights {
    pub positive: f64,
    pub negative: f64,
    pub treatment: f64,
    pub baseline: f64,
    pub reversion: f64,
}

/// Platform-wide sentiment process: an AR(1) shock that feeds every user's
/// mood drift and shifts all engagement propensities each round. It gives
/// aggregate engagement genuine persistent round-to-round variation, the way
/// ambient context (news cycles, slow days) shifts a real platform's tone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AmbientSentiment {
    pub persistence: f64,
    pub shock_sd: f64,
    /// Additive non-skip probability shift per sentiment unit.
    pub engagement_weight: f64,
}

impl AmbientSentiment {
    /// Sentiment level at `round`, reconstructed from the keyed shock
    /// history (stateless, so branches share the path bitwise).
    pub fn level_at(&self, round: usize, rng: &crate::rng::RngContext) -> f64 {
        let mut s = 0.0;
        for k in 0..=round {
            s = self.persistence * s
                + self.shock_sd * rng.normal(&[crate::rng::tags::AMBIENT, k as u64]);
        }
        s
    }
}

/// Tables for one unit type: `actions[valence][mood bucket]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeKernel {
    pub positive: [ActionProbs; 3],
    pub negative: [ActionProbs; 3],
    pub sponsored: [ActionProbs; 3],
    pub mood: MoodWeights,
    pub initial_mood: u8,
}

impl TypeKernel {
    pub fn cell(&self, valence: Valence, bucket: MoodBucket) -> &ActionProbs {
        let idx = match bucket {
            MoodBucket::Low => 0,
            MoodBucket::Mid => 1,
            MoodBucket::High => 2,
        };
        match valence {
            Valence::Positive => &self.positive[idx],
            Valence::Negative => &self.negative[idx],
            Valence::Sponsored => &self.sponsored[idx],
        }
    }

}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorKernel {
    pub human: TypeKernel,
    pub ai: TypeKernel,
    pub ambient: AmbientSentiment,
}

impl BehaviorKernel {
    pub fn for_type(&self, unit_type: UnitType) -> &TypeKernel {
        match unit_type {
            UnitType::Human => &self.human,
            UnitType::Ai => &self.ai,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for tk in [&self.human, &self.ai] {
            for cell in tk.positive.iter().chain(&tk.negative).chain(&tk.sponsored) {
                cell.validate()?;
            }
            if tk.initial_mood > 4 {
                return Err(Error::Config("initial mood outside 0..=4".into()));
            }
        }
        Ok(())
    }

    /// Expected non-skip count for a feed with the given composition at a
    /// fixed mood, straight from the tables.
    pub fn expected_outcome(
        &self,
        unit_type: UnitType,
        mood: u8,
        n_positive: usize,
        n_negative: usize,
        n_sponsored: usize,
    ) -> f64 {
        let tk = self.for_type(unit_type);
        let b = mood_bucket(mood);
        n_positive as f64 * tk.cell(Valence::Positive, b).non_skip()
            + n_negative as f64 * tk.cell(Valence::Negative, b).non_skip()
            + n_sponsored as f64 * tk.cell(Valence::Sponsored, b).non_skip()
    }
}

impl Default for BehaviorKernel {
    fn default() -> Self {
        BehaviorKernel {
            human: TypeKernel {
                // Optimists engage more as mood rises, prefer positive posts.
                positive: [probs(0.22, 0.28, 0.50), probs(0.30, 0.35, 0.35), probs(0.37, 0.39, 0.24)],
                negative: [probs(0.16, 0.12, 0.72), probs(0.20, 0.15, 0.65), probs(0.26, 0.17, 0.57)],
                // Success stories act mostly through mood, not the same round.
                sponsored: [probs(0.21, 0.21, 0.58), probs(0.26, 0.26, 0.48), probs(0.31, 0.30, 0.39)],
                mood: MoodWeights {
                    positive: 0.25,
                    negative: -0.30,
                    treatment: 0.85,
                    baseline: 2.0,
                    reversion: 0.50,
                },
                initial_mood: 2,
            },
            ai: TypeKernel {
                // Cynics engage with venting threads, shrug at positive ones.
                // Low mood recovers slowly (weak reversion), so treatment
                // exposure leaves a multi-round dent in engagement.
                positive: [probs(0.08, 0.11, 0.81), probs(0.12, 0.16, 0.72), probs(0.15, 0.20, 0.65)],
                negative: [probs(0.33, 0.19, 0.48), probs(0.40, 0.22, 0.38), probs(0.42, 0.24, 0.34)],
                sponsored: [probs(0.055, 0.09, 0.855), probs(0.11, 0.16, 0.73), probs(0.13, 0.19, 0.68)],
                mood: MoodWeights {
                    positive: -0.25,
                    negative: 0.20,
                    treatment: -0.50,
                    baseline: 2.0,
                    reversion: 0.50,
                },
                initial_mood: 2,
            },
            ambient: AmbientSentiment {
                persistence: 0.7,
                shock_sd: 0.30,
                engagement_weight: 0.0,
            },
        }
    }
}

/// Mood transition from feed exposure counts with stochastic rounding.
///
/// The fractional target is quantized by `floor(x) + Bernoulli(frac(x))`
/// using the supplied uniform deviate, so small drifts move the aggregate
/// mood distribution instead of vanishing in integer rounding.
pub fn update_mood(
    mood: u8,
    weights: &MoodWeights,
    n_positive: usize,
    n_negative: usize,
    n_sponsored: usize,
    ambient: f64,
    u: f64,
) -> u8 {
    let drift = weights.positive * n_positive as f64
        + weights.negative * n_negative as f64
        + weights.treatment * n_sponsored as f64
        + weights.reversion * (weights.baseline - mood as f64)
        + ambient;
    let target = (mood as f64 + drift).clamp(0.0, 4.0);
    let lo = target.floor();
    let level = lo + ((u < target - lo) as u8) as f64;
    level.clamp(0.0, 4.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_kernel_is_valid() {
        BehaviorKernel::default().validate().unwrap();
    }

    #[test]
    fn invalid_cell_rejected() {
        let mut k = BehaviorKernel::default();
        k.human.positive[0] = probs(0.9, 0.9, -0.8);
        assert!(k.validate().is_err());
    }

    #[test]
    fn sponsored_expectation_signs() {
        // Swapping one organic slot for the sponsored thread raises the
        // expected human outcome and lowers the AI one, at every mood.
        let k = BehaviorKernel::default();
        for mood in 0..=4u8 {
            // Treated: 1.5/1.5 organic mix + sponsored vs untreated 2/2.
            let h_treated = 0.5
                * (k.expected_outcome(UnitType::Human, mood, 2, 1, 1)
                    + k.expected_outcome(UnitType::Human, mood, 1, 2, 1));
            let h_untreated = k.expected_outcome(UnitType::Human, mood, 2, 2, 0);
            assert!(
                h_treated > h_untreated,
                "human mood {mood}: {h_treated} vs {h_untreated}"
            );
            let a_treated = 0.5
                * (k.expected_outcome(UnitType::Ai, mood, 2, 1, 1)
                    + k.expected_outcome(UnitType::Ai, mood, 1, 2, 1));
            let a_untreated = k.expected_outcome(UnitType::Ai, mood, 2, 2, 0);
            assert!(
                a_treated < a_untreated,
                "ai mood {mood}: {a_treated} vs {a_untreated}"
            );
        }
    }

    #[test]
    fn mood_updates_ratchet_and_clamp() {
        let k = BehaviorKernel::default();
        // Treated human moves up under treatment exposure.
        assert!(update_mood(2, &k.human.mood, 2, 1, 1, 0.0, 0.5) > 2);
        // Sustained treatment holds an elevated level.
        assert!(update_mood(4, &k.human.mood, 2, 1, 1, 0.0, 0.5) >= 3);
        // Without treatment, elevated mood reverts toward baseline.
        assert!(update_mood(4, &k.human.mood, 2, 2, 0, 0.0, 0.99) < 4);
        // Treated AI sinks from baseline and stays pinned at the floor.
        assert!(update_mood(2, &k.ai.mood, 1, 2, 1, 0.0, 0.99) < 2);
        assert_eq!(update_mood(0, &k.ai.mood, 1, 2, 1, 0.0, 0.99), 0);
        // Depressed AI recovers once treatment stops (stochastic rounding
        // carries the fractional drift with matching probability).
        let drift = -0.1 + k.ai.mood.reversion * 2.0;
        assert!(drift > 0.0);
        assert_eq!(update_mood(0, &k.ai.mood, 2, 2, 0, 0.0, drift - 0.01), 1);
        // Ambient sentiment shifts the drift additively.
        assert!(update_mood(2, &k.human.mood, 2, 2, 0, 1.6, 0.5) > 2);
        // Expected mood change is unbiased: mean over the uniform equals the
        // fractional target.
        let n = 40_000;
        let mut s = crate::rng::Stream::keyed(11, &[99]);
        let mean = (0..n)
            .map(|_| update_mood(2, &k.ai.mood, 2, 2, 0, 0.0, s.next_f64()) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.9).abs() < 0.01, "mean mood {mean}");
    }



    #[test]
    fn action_draw_thresholds() {
        let p = probs(0.3, 0.4, 0.3);
        assert_eq!(p.draw(0.0), Action::Reply);
        assert_eq!(p.draw(0.29), Action::Reply);
        assert_eq!(p.draw(0.3), Action::Like);
        assert_eq!(p.draw(0.69), Action::Like);
        assert_eq!(p.draw(0.7), Action::Skip);
        assert_eq!(p.draw(0.999), Action::Skip);
    }
}
