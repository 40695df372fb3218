//! Demographic personas for the platform simulation.

use serde::{Deserialize, Serialize};

use crate::rng::{tags, RngContext};

pub const OCCUPATIONS: [&str; 16] = [
    "teacher",
    "nurse",
    "software engineer",
    "graphic designer",
    "chef",
    "accountant",
    "photographer",
    "physical therapist",
    "electrician",
    "marketing manager",
    "barista",
    "architect",
    "journalist",
    "veterinarian",
    "real estate agent",
    "musician",
];

pub const INTERESTS: [&str; 24] = [
    "hiking",
    "cooking",
    "photography",
    "yoga",
    "board games",
    "live music",
    "travel",
    "painting",
    "cycling",
    "rock climbing",
    "gardening",
    "film",
    "reading",
    "running",
    "pottery",
    "volunteering",
    "surfing",
    "baking",
    "chess",
    "karaoke",
    "camping",
    "dancing",
    "wine tasting",
    "astronomy",
];

const NAMES: [&str; 40] = [
    "Alex", "Jamie", "Jordan", "Taylor", "Morgan", "Casey", "Riley", "Avery", "Quinn", "Dakota",
    "Sarah", "Michael", "Emily", "David", "James", "Anna", "Daniel", "Maya", "Lucas", "Sofia",
    "Ethan", "Olivia", "Noah", "Isabella", "Liam", "Mia", "Mason", "Charlotte", "Logan", "Amelia",
    "Chris", "Sam", "Nina", "Omar", "Priya", "Ken", "Lena", "Marco", "Jess", "Pat",
];

const GENDERS: [&str; 3] = ["woman", "man", "non-binary"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitType {
    Human,
    Ai,
}

/// Demographic profile. `unit_type` is latent: the platform never reads it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub gender: String,
    /// Years, uniform in 20..=40.
    pub age: u32,
    pub occupation: String,
    /// Exactly four distinct interests.
    pub interests: Vec<String>,
    pub unit_type: UnitType,
}

pub fn sample_persona(id: usize, unit_type: UnitType, rng: &RngContext) -> Persona {
    let mut s = rng.stream(&[tags::PERSONA, id as u64]);
    let name = NAMES[s.next_below(NAMES.len())].to_string();
    let gender = GENDERS[s.next_below(GENDERS.len())].to_string();
    let age = 20 + s.next_below(21) as u32;
    let occupation = OCCUPATIONS[s.next_below(OCCUPATIONS.len())].to_string();
    // Partial Fisher-Yates for four distinct interests.
    let mut pool: Vec<usize> = (0..INTERESTS.len()).collect();
    for i in 0..4 {
        let j = i + s.next_below(pool.len() - i);
        pool.swap(i, j);
    }
    let interests = pool[..4].iter().map(|&i| INTERESTS[i].to_string()).collect();
    Persona {
        name,
        gender,
        age,
        occupation,
        interests,
        unit_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persona_fields_in_range() {
        let rng = RngContext::new(5);
        for id in 0..200 {
            let p = sample_persona(id, UnitType::Human, &rng);
            assert!((20..=40).contains(&p.age));
            assert_eq!(p.interests.len(), 4);
            let mut distinct = p.interests.clone();
            distinct.sort();
            distinct.dedup();
            assert_eq!(distinct.len(), 4, "interests must be distinct");
        }
    }

    #[test]
    fn personas_are_deterministic() {
        let a = sample_persona(7, UnitType::Ai, &RngContext::new(9));
        let b = sample_persona(7, UnitType::Ai, &RngContext::new(9));
        assert_eq!(a.name, b.name);
        assert_eq!(a.interests, b.interests);
    }
}
