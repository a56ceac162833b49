//! Prompt rendering, token estimation, and strict reply validation.

mod response;

use std::fmt::Write as _;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::Candidate;
use crate::evidence::EvidenceCard;
use crate::ingest::CheckIn;
use crate::kg::Profile;
use crate::policy::Style;
use crate::taxonomy::TimeSlot;

pub use response::{parse_response, RankingResponse, Violation, ViolationReason};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("cannot render a prompt with an empty candidate set")]
    EmptyCandidateSet,
}

/// Everything the header and trajectory block need about the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user_id: String,
    /// Slot of the decision time.
    pub slot: TimeSlot,
    /// Local decision time, seconds.
    pub decision_time: i64,
    pub last: CheckIn,
    pub profile: Profile,
    pub intents: Vec<String>,
    /// Check-ins shown as the recent trajectory, oldest first, ending at `last`.
    pub trajectory: Vec<CheckIn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
    pub token_estimate: usize,
}

impl RenderedPrompt {
    pub fn new(system_text: String, user_text: String) -> Self {
        let token_estimate = count_tokens(&format!("{system_text}{user_text}"));
        RenderedPrompt { system_text, user_text, token_estimate }
    }

    /// Single-string form with chat-template markers, for completion-style
    /// endpoints.
    pub fn full_text(&self) -> String {
        format!("<s>[INST] <<SYS>> {} <</SYS>> \n\n{} \n[/INST]", self.system_text, self.user_text)
    }
}

/// Four characters per token, rounded up.
pub fn count_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub(crate) fn format_local(local: i64) -> String {
    DateTime::from_timestamp(local, 0).unwrap_or_default().format("%Y-%m-%d %H:%M").to_string()
}

fn list_or_none<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> String {
    let v: Vec<String> = items.into_iter().map(|s| s.as_ref().to_string()).collect();
    if v.is_empty() {
        "none".to_string()
    } else {
        v.join(", ")
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

pub fn system_text(ctx: &UserContext) -> String {
    let p = &ctx.profile;
    format!(
        "You are a next-POI recommendation system. You are user {}. Your basic profile is as follows: \
         you have preferences such as {}, and typically follow routines like {}. \
         You frequently visit categories including {}, are most active in regions like {}, \
         and have a typical mobility radius of {:.2} kilometers. \
         Based on recent context, your current intent is {}. \
         Output Format: {{\"ranking\": [...]}}, your output must follow the format strictly.",
        ctx.user_id,
        list_or_none(&p.preferred_intents),
        list_or_none(p.preferred_timeslots.iter().map(|t| t.label())),
        list_or_none(&p.top_categories),
        list_or_none(&p.hotspot_grids),
        p.mobility_radius_km,
        list_or_none(&ctx.intents),
    )
}

pub fn candidate_list(candidates: &[Candidate]) -> String {
    let items: Vec<String> = candidates
        .iter()
        .map(|c| format!("{{\"id\": {}, \"category\": {}, \"distance\": {:.2}}}", json_str(&c.poi_id), json_str(&c.category), c.distance_km))
        .collect();
    format!("[{}]", items.join(", "))
}

pub fn render_card(card: &EvidenceCard, style: Style) -> String {
    let items: Vec<String> = card
        .rationales
        .iter()
        .map(|r| match style {
            Style::Concise => json_str(&r.text),
            Style::RationaleRich => json_str(&format!("{} (via {})", r.text, r.via)),
        })
        .collect();
    format!("Card({}) = [{}];", card.poi_id, items.join(", "))
}

pub fn user_text(ctx: &UserContext, candidates: &[Candidate], cards: &[EvidenceCard], style: Style) -> String {
    let records: Vec<String> = ctx
        .trajectory
        .iter()
        .map(|c| format!("{} ({}) at {}", c.poi_id, c.category, format_local(c.local_time())))
        .collect();
    let mut s = String::new();
    let _ = write!(
        s,
        "The recent trajectory of user {} includes the following check-ins: [{}].\n\
         At the current decision point, we aim to predict the next POI the user will visit. \
         The candidate POIs are: {}.\n\n\
         The supporting evidence for each candidate is summarized as follows:",
        ctx.user_id,
        records.join("; "),
        candidate_list(candidates),
    );
    for c in candidates {
        match cards.iter().find(|k| k.poi_id == c.poi_id) {
            Some(card) => {
                let _ = write!(s, " {}", render_card(card, style));
            }
            None => {
                let _ = write!(s, " Card({}) = [];", c.poi_id);
            }
        }
    }
    let _ = write!(
        s,
        "\n\nGiven the above user context, candidates, and evidence, please predict which POI the user {} will visit at time {} ({}).",
        ctx.user_id,
        format_local(ctx.decision_time),
        ctx.slot
    );
    s
}

/// Renders the three-part prompt. Cards are emitted in candidate order.
pub fn render_prompt(
    ctx: &UserContext,
    candidates: &[Candidate],
    cards: &[EvidenceCard],
    style: Style,
) -> Result<RenderedPrompt, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidateSet);
    }
    Ok(RenderedPrompt::new(system_text(ctx), user_text(ctx, candidates, cards, style)))
}
