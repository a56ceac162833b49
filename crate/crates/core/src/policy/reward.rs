//! The scalar reward: accuracy, category diversity, schema violation and
//! prompt cost, each in [0, 1], averaged with signs.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::discovery::Candidate;
use crate::prompt::{RankingResponse, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// 1 if the ground truth is in the top K.
    #[default]
    Binary,
    /// 1/rank if the ground truth is in the top K.
    ReciprocalRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub k: usize,
    /// Token budget normalizing the cost term.
    pub tau: f64,
    pub accuracy: AccuracyMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { k: 5, tau: 4000.0, accuracy: AccuracyMode::Binary }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("reward.k must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(format!("reward.tau must be > 0, got {}", self.tau));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: f64,
    pub diversity: f64,
    pub violation: f64,
    pub cost: f64,
    pub r: f64,
}

pub fn combine(accuracy: f64, diversity: f64, violation: f64, cost: f64) -> f64 {
    (accuracy + diversity - violation - cost) / 4.0
}

/// Distinct categories among the top-K over min(K, distinct categories in C).
pub fn diversity<S: AsRef<str>>(top_k_categories: &[S], candidate_categories: usize, k: usize) -> f64 {
    let denom = k.min(candidate_categories);
    if denom == 0 {
        return 0.0;
    }
    let distinct: BTreeSet<&str> = top_k_categories.iter().map(|s| s.as_ref()).collect();
    (distinct.len() as f64 / denom as f64).min(1.0)
}

pub fn cost(prompt_tokens: usize, tau: f64) -> f64 {
    (prompt_tokens as f64 / tau).min(1.0)
}

pub fn compute_reward(
    outcome: &Result<RankingResponse, Violation>,
    ground_truth: &str,
    candidates: &[Candidate],
    prompt_tokens: usize,
    config: &RewardConfig,
) -> RewardBreakdown {
    let lambda_cost = cost(prompt_tokens, config.tau);
    let (accuracy, div, vio) = match outcome {
        Err(_) => (0.0, 0.0, 1.0),
        Ok(resp) => {
            let k = config.k;
            let top = &resp.ranking[..resp.ranking.len().min(k)];
            let accuracy = match top.iter().position(|id| id == ground_truth) {
                None => 0.0,
                Some(i) => match config.accuracy {
                    AccuracyMode::Binary => 1.0,
                    AccuracyMode::ReciprocalRank => 1.0 / (i + 1) as f64,
                },
            };
            let cat_of: HashMap<&str, &str> =
                candidates.iter().map(|c| (c.poi_id.as_str(), c.category.as_str())).collect();
            let top_cats: Vec<&str> = top.iter().filter_map(|id| cat_of.get(id.as_str()).copied()).collect();
            let pool: BTreeSet<&str> = candidates.iter().map(|c| c.category.as_str()).collect();
            (accuracy, diversity(&top_cats, pool.len(), k), 0.0)
        }
    };
    RewardBreakdown { accuracy, diversity: div, violation: vio, cost: lambda_cost, r: combine(accuracy, div, vio, lambda_cost) }
}
