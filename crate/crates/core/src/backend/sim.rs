//! Deterministic stand-in for a language model. It reads the rendered
//! prompt back, scores every candidate from its evidence card against the
//! prompted user's hidden preference with a primacy-biased sum, and replies
//! with a strict JSON ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::world::{HiddenPreference, SimWorld};
use super::{Backend, BackendError};
use crate::discovery::Candidate;
use crate::meta::{fnv1a, mix64};
use crate::prompt::RenderedPrompt;
use crate::taxonomy::{category_group, IntentVocabulary, TimeSlot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    pub seed: u64,
    /// Weight decay per card position; 1 disables the primacy bias.
    pub gamma: f64,
    pub noise_scale: f64,
    /// Extra noise amplitude per 1000 prompt tokens; long prompts read less reliably.
    pub context_noise: f64,
    pub header_bonus: f64,
    pub distance_penalty: f64,
    pub intent_match: f64,
    pub intent_partial: f64,
    pub category_match: f64,
    pub grid_match: f64,
    pub near_last: f64,
    pub near_past: f64,
    pub time_match: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            seed: 0,
            gamma: 0.6,
            noise_scale: 0.05,
            context_noise: 0.0,
            header_bonus: 0.3,
            distance_penalty: 0.7,
            intent_match: 1.0,
            intent_partial: 0.5,
            category_match: 2.0,
            grid_match: 1.0,
            near_last: 0.3,
            near_past: 0.05,
            time_match: 0.5,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("oracle.gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(format!("oracle.noise_scale must be >= 0, got {}", self.noise_scale));
        }
        if !(self.context_noise >= 0.0 && self.context_noise.is_finite()) {
            return Err(format!("oracle.context_noise must be >= 0, got {}", self.context_noise));
        }
        Ok(())
    }
}

/// What the oracle recovers from a rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPrompt {
    pub user_id: String,
    pub intents: Vec<String>,
    pub target_slot: Option<TimeSlot>,
    pub candidates: Vec<Candidate>,
    pub cards: BTreeMap<String, Vec<String>>,
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let i = s.find(start)? + start.len();
    let j = s[i..].find(end)? + i;
    Some(&s[i..j])
}

fn first_json<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    serde_json::Deserializer::from_str(s).into_iter::<T>().next()?.ok()
}

/// Structural reader for prompts produced by [`crate::prompt::render_prompt`].
pub fn parse_prompt(system: &str, user: &str) -> Option<ParsedPrompt> {
    let user_id = between(system, "You are user ", ". Your basic profile")?.to_string();
    let intents = between(system, "your current intent is ", ". Output Format")?
        .split(", ")
        .filter(|s| *s != "none")
        .map(str::to_string)
        .collect();

    let list_at = user.find("The candidate POIs are: ")? + "The candidate POIs are: ".len();
    #[derive(Deserialize)]
    struct Row {
        id: String,
        category: String,
        distance: f64,
    }
    let rows: Vec<Row> = first_json(&user[list_at..])?;
    let candidates = rows
        .into_iter()
        .map(|r| Candidate { poi_id: r.id, category: r.category, distance_km: r.distance })
        .collect();

    let mut cards = BTreeMap::new();
    let evidence_at = user.find("summarized as follows:")?;
    let mut rest = &user[evidence_at..];
    while let Some(i) = rest.find("Card(") {
        rest = &rest[i + 5..];
        let close = rest.find(") = [")?;
        let id = rest[..close].to_string();
        rest = &rest[close + 4..];
        let items: Vec<String> = first_json(rest)?;
        cards.insert(id, items);
    }

    let tail = user.trim_end();
    let target_slot = tail
        .rfind('(')
        .and_then(|i| tail[i + 1..].split(')').next())
        .and_then(TimeSlot::parse);
    Some(ParsedPrompt { user_id, intents, target_slot, candidates, cards })
}

pub struct SimOracle {
    params: OracleParams,
    vocab: IntentVocabulary,
    hidden: BTreeMap<String, HiddenPreference>,
    poi_cluster: BTreeMap<String, String>,
}

impl SimOracle {
    pub fn new(world: &SimWorld, params: OracleParams, vocab: IntentVocabulary) -> Self {
        SimOracle {
            params,
            vocab,
            hidden: world.users.iter().map(|u| (u.id.clone(), u.hidden.clone())).collect(),
            poi_cluster: world.pois.iter().map(|p| (p.id.clone(), p.cluster.clone())).collect(),
        }
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    fn noise(&self, user: &str, poi: &str, tokens: usize) -> f64 {
        let h = mix64(fnv1a(&[&self.params.seed.to_le_bytes(), user.as_bytes(), poi.as_bytes()]));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        let amplitude = self.params.noise_scale + self.params.context_noise * tokens as f64 / 1000.0;
        (2.0 * u - 1.0) * amplitude
    }

    /// How well one rationale line agrees with the user's hidden preference.
    fn match_value(&self, line: &str, pref: &HiddenPreference, poi: &str, target: Option<TimeSlot>) -> f64 {
        let p = &self.params;
        let routine = target.and_then(|t| pref.preferred_for(t.period));
        let core = match line.rfind(" (via ") {
            Some(i) => &line[..i],
            None => line,
        };
        if let Some(rest) = core.strip_prefix("Matches ") {
            let Some((_, cat)) = rest.split_once(" intent via ") else { return 0.0 };
            let cat = cat.strip_suffix(" category").unwrap_or(cat);
            if Some(cat) == routine {
                p.intent_match
            } else if self.vocab.serves_group(&pref.true_intent, category_group(cat)) {
                p.intent_partial
            } else {
                0.0
            }
        } else if let Some(rest) = core.strip_prefix("Same ") {
            let cat = rest.strip_suffix(" category as your past visits").unwrap_or(rest);
            if Some(cat) == routine {
                p.category_match
            } else {
                0.0
            }
        } else if core.starts_with("Shares ") {
            if self.poi_cluster.get(poi) == Some(&pref.home_grid) {
                p.grid_match
            } else {
                0.0
            }
        } else if core.starts_with("Located near your last visit") {
            p.near_last
        } else if core.starts_with("Located near your past visit") {
            p.near_past
        } else if let Some(rest) = core.strip_prefix("Popular in ") {
            let slot = rest.strip_suffix(" time slot").and_then(TimeSlot::parse);
            if slot.is_some() && slot == target {
                p.time_match
            } else {
                0.0
            }
        } else {
            0.0
        }
    }

    /// Oracle score of every candidate, in candidate order, for a prompt of
    /// `tokens` tokens.
    pub fn scores(&self, parsed: &ParsedPrompt, tokens: usize) -> Vec<f64> {
        let p = &self.params;
        let Some(pref) = self.hidden.get(&parsed.user_id) else {
            return parsed.candidates.iter().map(|c| -p.distance_penalty * c.distance_km).collect();
        };
        let intent_in_header = parsed.intents.contains(&pref.true_intent);
        parsed
            .candidates
            .iter()
            .map(|c| {
                let mut s = 0.0;
                if let Some(lines) = parsed.cards.get(&c.poi_id) {
                    let mut w = 1.0;
                    for line in lines {
                        s += w * self.match_value(line, pref, &c.poi_id, parsed.target_slot);
                        w *= p.gamma;
                    }
                }
                if intent_in_header && self.vocab.serves_group(&pref.true_intent, category_group(&c.category)) {
                    s += p.header_bonus;
                }
                s - p.distance_penalty * c.distance_km + self.noise(&parsed.user_id, &c.poi_id, tokens)
            })
            .collect()
    }

    pub fn rank(&self, parsed: &ParsedPrompt, tokens: usize) -> Vec<String> {
        let scores = self.scores(parsed, tokens);
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        idx.into_iter().map(|i| parsed.candidates[i].poi_id.clone()).collect()
    }
}

impl Backend for SimOracle {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, BackendError> {
        match parse_prompt(&prompt.system_text, &prompt.user_text) {
            Some(parsed) if !parsed.candidates.is_empty() => {
                Ok(serde_json::json!({ "ranking": self.rank(&parsed, prompt.token_estimate) }).to_string())
            }
            _ => Ok("ERROR".to_string()),
        }
    }
}
