//! One decision: discover, build cards, choose a prompt configuration,
//! query the backend, score the reply.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::{ActionSpace, PromptAction};
use super::features::{encode_features, encode_state};
use super::posterior::PosteriorState;
use super::reward::{compute_reward, RewardBreakdown, RewardConfig};
use crate::backend::{infer_intent, Backend};
use crate::discovery::{discover_candidates, enumerate_evidence_paths, Candidate, DiscoveryConfig, PathType};
use crate::evidence::{apply_prompt_policy, apply_random_policy, build_card, EvidenceCard, Rationale};
use crate::ingest::CheckIn;
use crate::kg::{EntityKind, Kg, KgError, Profile};
use crate::meta::{fnv1a, mix64};
use crate::prompt::{parse_response, render_prompt, UserContext, Violation};
use crate::taxonomy::{IntentVocabulary, TimeSlot};

/// Uninformative rationales appended to every card after capping the
/// informative pool, for stress-testing the per-card cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distractors {
    pub informative_cap: usize,
    pub count: usize,
}

/// Read-only handles an episode runs against.
pub struct Pipeline<'a> {
    pub kg: &'a Kg,
    pub profiles: &'a BTreeMap<String, Profile>,
    pub vocab: &'a IntentVocabulary,
    pub discovery: &'a DiscoveryConfig,
    pub reward: &'a RewardConfig,
    pub space: &'a ActionSpace,
    pub backend: &'a dyn Backend,
    pub seed: u64,
    distractors: Option<Distractors>,
    categories: Vec<String>,
}

impl<'a> Pipeline<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kg: &'a Kg,
        profiles: &'a BTreeMap<String, Profile>,
        vocab: &'a IntentVocabulary,
        discovery: &'a DiscoveryConfig,
        reward: &'a RewardConfig,
        space: &'a ActionSpace,
        backend: &'a dyn Backend,
        seed: u64,
    ) -> Self {
        Pipeline { kg, profiles, vocab, discovery, reward, space, backend, seed, distractors: None, categories: Vec::new() }
    }

    pub fn with_distractors(mut self, d: Option<Distractors>) -> Self {
        self.distractors = d;
        self.categories = match d {
            Some(_) => self.kg.entities_of(EntityKind::Category).map(|e| e.id.clone()).collect(),
            None => Vec::new(),
        };
        self
    }

    pub fn with_backend(&self, backend: &'a dyn Backend) -> Pipeline<'a> {
        Pipeline {
            kg: self.kg,
            profiles: self.profiles,
            vocab: self.vocab,
            discovery: self.discovery,
            reward: self.reward,
            space: self.space,
            backend,
            seed: self.seed,
            distractors: self.distractors,
            categories: self.categories.clone(),
        }
    }

    fn inject_distractors(&self, card: &mut EvidenceCard, profile: &Profile) {
        let user = profile.user_id.as_str();
        let Some(d) = self.distractors else { return };
        // keep a type-diverse informative pool: round-robin over path types,
        // best score first within each type
        if card.rationales.len() > d.informative_cap {
            let mut groups: Vec<Vec<Rationale>> = Vec::new();
            let mut pool = std::mem::take(&mut card.rationales);
            pool.sort_by(|a, b| b.score.total_cmp(&a.score));
            for r in pool {
                match groups.iter_mut().find(|g| g[0].path_type == r.path_type) {
                    Some(g) => g.push(r),
                    None => groups.push(vec![r]),
                }
            }
            let depth = groups.iter().map(Vec::len).max().unwrap_or(0);
            'fill: for level in 0..depth {
                for g in &groups {
                    if card.rationales.len() == d.informative_cap {
                        break 'fill;
                    }
                    if let Some(r) = g.get(level) {
                        card.rationales.push(r.clone());
                    }
                }
            }
        }
        let mut i = 0u64;
        let mut added = 0;
        while added < d.count && i < 8 * d.count as u64 + 8 {
            let h = mix64(fnv1a(&[&self.seed.to_le_bytes(), user.as_bytes(), card.poi_id.as_bytes(), &i.to_le_bytes()]));
            i += 1;
            let pick = |n: usize, salt: u32| ((h.rotate_left(salt) >> 8) % n.max(1) as u64) as usize;
            // plausible for this user, but not evidence about this POI
            let from = |own: &[String], all: &[String], salt: u32| -> Option<String> {
                let src = if own.is_empty() { all } else { own };
                src.get(pick(src.len(), salt)).cloned()
            };
            let intent = from(&profile.preferred_intents, &self.vocab.labels, 13);
            let category = from(&profile.top_categories, &self.categories, 29);
            let slots = if profile.preferred_timeslots.is_empty() { &TimeSlot::ALL[..] } else { &profile.preferred_timeslots[..] };
            let slot = slots[pick(slots.len(), 17)];
            let (text, path_type, via) = match (h % 3, intent, category) {
                (0, Some(intent), Some(category)) => (
                    format!("Matches {} intent via {category} category", IntentVocabulary::display(&intent)),
                    PathType::Intent,
                    "User→Profile→Intent→Category",
                ),
                (1, _, Some(category)) => {
                    (format!("Same {category} category as your past visits"), PathType::Category, "User→POI→Category")
                }
                _ => (format!("Popular in {slot} time slot"), PathType::Time, "User→Profile→TimeSlot"),
            };
            if card.rationales.iter().any(|r| r.text == text) {
                continue;
            }
            card.rationales.push(Rationale { text, path_type, score: 0.05, source_length: 20, via: via.to_string() });
            added += 1;
        }
    }
}

/// A point in a trajectory where the next check-in is predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub user_id: String,
    pub trajectory_id: String,
    /// Index of `next` within its trajectory.
    pub step: usize,
    /// Check-ins shown as the recent trajectory; the last one is ℓ.
    pub shown: Vec<CheckIn>,
    pub next: CheckIn,
}

impl DecisionPoint {
    pub fn last(&self) -> &CheckIn {
        self.shown.last().expect("decision point has at least one shown check-in")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionRule {
    /// Sample from the posterior (training).
    Thompson,
    /// Posterior-mean argmax.
    Greedy,
    /// Posterior-mean argmax among actions with this cap.
    GreedyWithM(usize),
    /// Random selection and order of `m` rationales; style from the greedy action.
    RandomEvidence { m: usize },
    /// A fixed action index.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub user_id: String,
    pub trajectory_id: String,
    pub step: usize,
    /// Local decision time, seconds.
    pub decision_time: i64,
    pub n_candidates: usize,
    pub state: Vec<f64>,
    pub action: Option<PromptAction>,
    pub action_index: Option<usize>,
    pub prompt_tokens: usize,
    pub ranking: Option<Vec<String>>,
    pub violation: Option<Violation>,
    pub reward: Option<RewardBreakdown>,
    pub ground_truth: String,
    pub candidate_recall: bool,
    /// 1-based rank of the ground truth, if ranked.
    pub rank: Option<usize>,
    pub skipped: Option<String>,
}

impl EpisodeRecord {
    pub(crate) fn skipped(dp: &DecisionPoint, reason: impl Into<String>) -> Self {
        EpisodeRecord {
            user_id: dp.user_id.clone(),
            trajectory_id: dp.trajectory_id.clone(),
            step: dp.step,
            decision_time: dp.next.local_time(),
            n_candidates: 0,
            state: Vec::new(),
            action: None,
            action_index: None,
            prompt_tokens: 0,
            ranking: None,
            violation: None,
            reward: None,
            ground_truth: dp.next.poi_id.clone(),
            candidate_recall: false,
            rank: None,
            skipped: Some(reason.into()),
        }
    }

    pub fn hit_at(&self, k: usize) -> bool {
        self.rank.is_some_and(|r| r <= k)
    }
}

pub fn discover_for(p: &Pipeline<'_>, dp: &DecisionPoint) -> Result<Vec<Candidate>, KgError> {
    discover_candidates(p.kg, &dp.user_id, dp.last(), p.discovery)
}

/// Runs one episode without touching the posterior.
pub fn run_episode<R: Rng + ?Sized>(
    p: &Pipeline<'_>,
    posterior: &PosteriorState,
    dp: &DecisionPoint,
    rule: ActionRule,
    previous: Option<&PromptAction>,
    rng: &mut R,
) -> EpisodeRecord {
    let Some(profile) = p.profiles.get(&dp.user_id) else {
        return EpisodeRecord::skipped(dp, "user has no profile");
    };
    let candidates = match discover_for(p, dp) {
        Ok(c) if c.is_empty() => return EpisodeRecord::skipped(dp, "empty candidate set"),
        Ok(c) => c,
        Err(e) => return EpisodeRecord::skipped(dp, e.to_string()),
    };
    let last = dp.last();
    let slot = dp.next.time_slot();
    let intents = infer_intent(p.backend, last, slot, p.vocab);
    let state = encode_state(
        slot,
        &intents,
        p.vocab,
        dp.shown.len(),
        profile.mobility_radius_km,
        &candidates,
        p.discovery.max_candidates,
        p.discovery.r_bar_km,
        previous,
        p.space,
    );

    let chosen = match rule {
        ActionRule::Thompson => posterior.select(p.space, &state, rng),
        ActionRule::Greedy | ActionRule::RandomEvidence { .. } => posterior.select_mean(p.space, &state, |_| true),
        ActionRule::Fixed(i) if i < p.space.len() => Ok(i),
        ActionRule::Fixed(i) => Err(super::PolicyError::Config(format!("action index {i} out of range"))),
        ActionRule::GreedyWithM(m) => {
            if p.space.actions.iter().any(|a| a.m == m) {
                posterior.select_mean(p.space, &state, |i| p.space.actions[i].m == m)
            } else {
                posterior.select_mean(p.space, &state, |_| true)
            }
        }
    };
    let index = match chosen {
        Ok(i) => i,
        Err(e) => return EpisodeRecord::skipped(dp, e.to_string()),
    };
    let mut action = p.space.actions[index];
    match rule {
        ActionRule::GreedyWithM(m) | ActionRule::RandomEvidence { m } => action.m = m,
        _ => {}
    }

    let mut cards = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let paths = enumerate_evidence_paths(p.kg, &dp.user_id, &c.poi_id, p.discovery).unwrap_or_default();
        let mut card = build_card(&c.poi_id, &paths, &last.poi_id);
        p.inject_distractors(&mut card, profile);
        cards.push(match rule {
            ActionRule::RandomEvidence { m } => apply_random_policy(&card, m, rng),
            _ => apply_prompt_policy(&card, &action),
        });
    }

    let ctx = UserContext {
        user_id: dp.user_id.clone(),
        slot,
        decision_time: dp.next.local_time(),
        last: last.clone(),
        profile: profile.clone(),
        intents,
        trajectory: dp.shown.clone(),
    };
    let prompt = match render_prompt(&ctx, &candidates, &cards, action.style) {
        Ok(pr) => pr,
        Err(e) => return EpisodeRecord::skipped(dp, e.to_string()),
    };
    let mut record = EpisodeRecord::skipped(dp, "");
    record.skipped = None;
    record.n_candidates = candidates.len();
    record.action = Some(action);
    record.action_index = Some(index);
    record.prompt_tokens = prompt.token_estimate;
    record.candidate_recall = candidates.iter().any(|c| c.poi_id == dp.next.poi_id);

    let text = match p.backend.complete(&prompt) {
        Ok(t) => t,
        Err(e) => {
            record.skipped = Some(e.to_string());
            record.state = state.to_vec();
            return record;
        }
    };
    let ids: Vec<&str> = candidates.iter().map(|c| c.poi_id.as_str()).collect();
    let outcome = parse_response(&text, &ids);
    let reward = compute_reward(&outcome, &dp.next.poi_id, &candidates, prompt.token_estimate, p.reward);
    match outcome {
        Ok(resp) => {
            record.rank = resp.ranking.iter().position(|id| *id == dp.next.poi_id).map(|i| i + 1);
            record.ranking = Some(resp.ranking);
        }
        Err(v) => record.violation = Some(v),
    }
    record.reward = Some(reward);
    record.state = state.to_vec();
    record
}

/// Thompson episode followed by the posterior update. Episodes without a
/// reward leave the posterior untouched.
pub fn train_episode<R: Rng + ?Sized>(
    p: &Pipeline<'_>,
    posterior: &mut PosteriorState,
    dp: &DecisionPoint,
    previous: Option<&PromptAction>,
    rng: &mut R,
) -> EpisodeRecord {
    let mut record = run_episode(p, posterior, dp, ActionRule::Thompson, previous, rng);
    if let (Some(action), Some(reward)) = (record.action, record.reward) {
        let state = super::features::State { context: record.state.clone(), phi: Vec::new(), psi: Vec::new() };
        let x = encode_features(&state, &action, p.space);
        if let Err(e) = posterior.update(&x, reward.r) {
            record.skipped = Some(format!("update rejected: {e}"));
        }
    }
    record
}
