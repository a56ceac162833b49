//! Contextual Thompson Sampling over prompt configurations.

mod action;
mod episode;
mod features;
mod posterior;
mod reward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{action_space, ActionGrid, ActionSpace, Mixture, Ordering, PromptAction, Style};
pub use episode::{
    discover_for, run_episode, train_episode, ActionRule, DecisionPoint, Distractors, EpisodeRecord, Pipeline,
};
pub use features::{candidate_summary, encode_features, encode_state, state_dim, State, PHI_DIM};
pub use posterior::{PosteriorState, CHECKPOINT_VERSION};
pub use reward::{combine, compute_reward, cost, diversity, AccuracyMode, RewardBreakdown, RewardConfig};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("action grid has an empty dimension")]
    EmptyGrid,
    #[error("policy config: {0}")]
    Config(String),
    #[error("posterior precision matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("feature vector has non-finite entries")]
    NonFinite,
    #[error("reward {0} outside [-0.5, 0.5]")]
    RewardOutOfRange(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub grid: ActionGrid,
    pub lambda_prior: f64,
    pub sigma2: f64,
    /// Print a progress line every this many training episodes (0 = never).
    pub progress_every: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { grid: ActionGrid::default(), lambda_prior: 1.0, sigma2: 0.25, progress_every: 500 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        action_space(&self.grid).map_err(|e| e.to_string())?;
        if !(self.lambda_prior > 0.0 && self.lambda_prior.is_finite()) {
            return Err(format!("policy.lambda_prior must be > 0, got {}", self.lambda_prior));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(format!("policy.sigma2 must be > 0, got {}", self.sigma2));
        }
        Ok(())
    }
}
