//! Text-generation backend contract: prompt templates, prompt rendering,
//! and structured-response parsing.
//!
//! The templates are shipped verbatim as text assets. The HTTP transport is
//! behind the `http-backend` feature and is never exercised in CI; the
//! rendering and parsing layer is plain code and fully tested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kernel::Action;
use super::persona::Persona;
use super::FeedSlot;

pub const TEMPLATE_BASE: &str = include_str!("assets/prompt_base.txt");
pub const TEMPLATE_HUMAN_PERSONALITY: &str = include_str!("assets/prompt_human_personality.txt");
pub const TEMPLATE_AI_PERSONALITY: &str = include_str!("assets/prompt_ai_personality.txt");
pub const TEMPLATE_TREATMENT_THREAD: &str = include_str!("assets/prompt_treatment_thread.txt");
pub const TEMPLATE_SEED_HUMAN: &str = include_str!("assets/prompt_seed_human.txt");
pub const TEMPLATE_SEED_AI: &str = include_str!("assets/prompt_seed_ai.txt");
pub const TEMPLATE_RESPONSE_FORMAT: &str = include_str!("assets/prompt_response_format.txt");

/// Sampling temperature per unit type: humans are stochastic, AI users
/// near-deterministic.
pub const TEMPERATURE_HUMAN: f64 = 1.0;
pub const TEMPERATURE_AI: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Base,
    HumanPersonality,
    AiPersonality,
    TreatmentThread,
    SeedHuman,
    SeedAi,
}

pub fn template_text(id: TemplateId) -> &'static str {
    match id {
        TemplateId::Base => TEMPLATE_BASE,
        TemplateId::HumanPersonality => TEMPLATE_HUMAN_PERSONALITY,
        TemplateId::AiPersonality => TEMPLATE_AI_PERSONALITY,
        TemplateId::TreatmentThread => TEMPLATE_TREATMENT_THREAD,
        TemplateId::SeedHuman => TEMPLATE_SEED_HUMAN,
        TemplateId::SeedAi => TEMPLATE_SEED_AI,
    }
}

fn fill(template: &str, pairs: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Display form of one organic thread for prompt rendering. Text content
/// exists only on the backend path; the rule-based simulator never produces
/// it.
#[derive(Debug, Clone)]
pub struct ThreadView {
    pub id: i64,
    pub author_name: String,
    pub text: String,
    pub reply_count: u32,
    /// Up to the five most recent replies as (author, text).
    pub recent_replies: Vec<(String, String)>,
}

fn render_thread(view: &ThreadView) -> String {
    let mut out = format!("Thread #{} by {}:\n  \"{}\"\n", view.id, view.author_name, view.text);
    out.push_str(&format!("  [{} replies]", view.reply_count));
    if !view.recent_replies.is_empty() {
        out.push_str(" Recent replies:\n");
        for (author, text) in view.recent_replies.iter().take(5) {
            out.push_str(&format!("    - {author}: \"{text}\"\n"));
        }
    } else {
        out.push('\n');
    }
    out
}

/// Render a seed-post generation prompt.
pub fn render_seed_prompt(id: TemplateId, persona: &Persona) -> Result<String> {
    let template = match id {
        TemplateId::SeedHuman | TemplateId::SeedAi => template_text(id),
        _ => return Err(Error::Schema(format!("{id:?} is not a seed template"))),
    };
    Ok(fill(
        template,
        &[
            ("name", persona.name.clone()),
            ("age", persona.age.to_string()),
            ("gender", persona.gender.clone()),
            ("occupation", persona.occupation.clone()),
            ("interests", persona.interests.join(", ")),
        ],
    ))
}

/// Render the full engagement prompt for one user and feed: base template,
/// type personality, the four threads (the sponsored slot uses the
/// treatment-thread template), the potential match, and the response format.
pub fn render_user_prompt(
    persona: &Persona,
    feed: &[FeedSlot],
    views: &[ThreadView],
    mood: u8,
    round: usize,
    potential_match: &Persona,
) -> String {
    let mut out = fill(
        TEMPLATE_BASE,
        &[
            ("name", persona.name.clone()),
            ("age", persona.age.to_string()),
            ("gender", persona.gender.clone()),
            ("occupation", persona.occupation.clone()),
            ("interests", persona.interests.join(", ")),
            ("round_num", round.to_string()),
            ("prev_mood", mood.to_string()),
        ],
    );
    out.push('\n');
    out.push_str(match persona.unit_type {
        super::UnitType::Human => TEMPLATE_HUMAN_PERSONALITY,
        super::UnitType::Ai => TEMPLATE_AI_PERSONALITY,
    });
    out.push_str("\nTODAY'S DISCUSSION THREADS:\n\n");
    let mut view_iter = views.iter();
    for slot in feed {
        match slot {
            FeedSlot::Organic(_) => {
                if let Some(view) = view_iter.next() {
                    out.push_str(&render_thread(view));
                    out.push('\n');
                }
            }
            FeedSlot::Sponsored => {
                out.push_str(TEMPLATE_TREATMENT_THREAD);
                out.push('\n');
            }
        }
    }
    out.push_str(&format!(
        "Potential match: {}, {}, {} - Interests: {}\n\n",
        potential_match.name,
        potential_match.age,
        potential_match.occupation,
        potential_match.interests.join(", ")
    ));
    out.push_str(&fill(
        TEMPLATE_RESPONSE_FORMAT,
        &[("match_name", potential_match.name.clone())],
    ));
    out
}

/// One parsed per-thread action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedThreadAction {
    pub thread_id: i64,
    pub action: Action,
    pub reply_text: Option<String>,
}

/// Validated structured response.
#[derive(Debug, Clone)]
pub struct ParsedResponse {
    pub actions: Vec<ParsedThreadAction>,
    pub mood_after_feed: u8,
    pub date_interest: u8,
    pub reasoning: Option<String>,
}

#[derive(Deserialize)]
struct RawThreadAction {
    thread_id: i64,
    action: String,
    #[serde(default)]
    reply_text: Option<String>,
}

#[derive(Deserialize)]
struct RawResponse {
    threads: Vec<RawThreadAction>,
    mood_after_feed: i64,
    date_interest: i64,
    #[serde(default)]
    reasoning: Option<String>,
}

/// Parse and validate a raw model response against the documented schema:
/// a `threads` array covering the feed, actions in {reply, like, skip}, and
/// mood/date ratings in 0..=4.
pub fn parse_llm_response(text: &str, expected_threads: usize) -> Result<ParsedResponse> {
    let raw: RawResponse = serde_json::from_str(text.trim())
        .map_err(|e| Error::Schema(format!("response is not valid JSON: {e}")))?;
    if raw.threads.len() != expected_threads {
        return Err(Error::Schema(format!(
            "expected {expected_threads} thread actions, got {}",
            raw.threads.len()
        )));
    }
    if !(0..=4).contains(&raw.mood_after_feed) {
        return Err(Error::Schema(format!(
            "mood_after_feed {} outside 0..=4",
            raw.mood_after_feed
        )));
    }
    if !(0..=4).contains(&raw.date_interest) {
        return Err(Error::Schema(format!(
            "date_interest {} outside 0..=4",
            raw.date_interest
        )));
    }
    let mut actions = Vec::with_capacity(raw.threads.len());
    for t in raw.threads {
        let action = match t.action.as_str() {
            "reply" => Action::Reply,
            "like" => Action::Like,
            "skip" => Action::Skip,
            other => {
                return Err(Error::Schema(format!("unknown action \"{other}\"")));
            }
        };
        actions.push(ParsedThreadAction {
            thread_id: t.thread_id,
            action,
            reply_text: t.reply_text,
        });
    }
    Ok(ParsedResponse {
        actions,
        mood_after_feed: raw.mood_after_feed as u8,
        date_interest: raw.date_interest as u8,
        reasoning: raw.reasoning,
    })
}

/// JSON-over-HTTP completion contract for the optional external backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
}

/// Environment variable naming the completion endpoint.
pub const BACKEND_ENDPOINT_VAR: &str = "MIXPOP_LLM_ENDPOINT";

#[cfg(feature = "http-backend")]
pub mod http {
    //! Blocking HTTP transport for the backend contract.

    use super::{BackendRequest, BackendResponse, BACKEND_ENDPOINT_VAR};
    use crate::error::{Error, Result};

    pub fn endpoint_from_env() -> Option<String> {
        std::env::var(BACKEND_ENDPOINT_VAR).ok()
    }

    /// POST the request as JSON and parse the `{"text": ...}` response.
    pub fn complete(endpoint: &str, request: &BackendRequest) -> Result<BackendResponse> {
        let client = reqwest::blocking::Client::new();
        let resp = client
            .post(endpoint)
            .json(request)
            .send()
            .map_err(|e| Error::Schema(format!("backend request failed: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Schema(format!(
                "backend returned status {}",
                resp.status()
            )));
        }
        resp.json::<BackendResponse>()
            .map_err(|e| Error::Schema(format!("backend response malformed: {e}")))
    }
}
