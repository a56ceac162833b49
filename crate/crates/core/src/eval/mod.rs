//! Metrics, cohorts, ablation arms and sensitivity sweeps.

mod cohort;
mod metrics;
mod report;
mod runner;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cohort::{split_cohorts, CohortAxis, CohortLabel, CohortSpec};
pub use metrics::{acc_at_k, candidate_recall, mean_reward, violation_rate};
pub use report::{records_csv, CohortStats, EvalReport, ModeReport};
pub use runner::{
    decision_points, heuristic_rank, run_evaluation, train_policy, training_points, EvalContext, EvalMode, EvalRun,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes to score")]
    NoEpisodes,
    #[error("cohort split needs at least 4 units, got {0}")]
    TooSmall(usize),
    #[error("this mode needs a trained posterior; run `train` first")]
    MissingPosterior,
    #[error("eval config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Cut-offs reported as Acc@k.
    pub ks: Vec<usize>,
    pub cohort_bottom: f64,
    pub cohort_top: f64,
    /// Rationale cap of the random-evidence arm.
    pub wo_rtnl_m: usize,
    pub sensitivity_ms: Vec<usize>,
    /// Weight of the distance term in the KG-only heuristic; the category
    /// frequency term gets the rest.
    pub heuristic_distance_weight: f64,
    /// Cap on test decision points (0 = all).
    pub max_test_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 5, 10],
            cohort_bottom: 0.3,
            cohort_top: 0.3,
            wo_rtnl_m: 10,
            sensitivity_ms: vec![5, 10, 15, 20],
            heuristic_distance_weight: 0.5,
            max_test_episodes: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err("eval.ks must be non-empty and >= 1".into());
        }
        for (name, f) in [("eval.cohort_bottom", self.cohort_bottom), ("eval.cohort_top", self.cohort_top)] {
            if !(f > 0.0 && f <= 0.5) {
                return Err(format!("{name} must be in (0, 0.5], got {f}"));
            }
        }
        if self.wo_rtnl_m == 0 {
            return Err("eval.wo_rtnl_m must be >= 1".into());
        }
        if self.sensitivity_ms.is_empty() || self.sensitivity_ms.contains(&0) {
            return Err("eval.sensitivity_ms must be non-empty and >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.heuristic_distance_weight) {
            return Err(format!(
                "eval.heuristic_distance_weight must be in [0, 1], got {}",
                self.heuristic_distance_weight
            ));
        }
        Ok(())
    }
}
