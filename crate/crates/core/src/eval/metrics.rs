use super::EvalError;
use crate::policy::EpisodeRecord;

/// Fraction of episodes whose ground truth is ranked within the top `k`.
/// Skipped episodes and violations count as misses.
pub fn acc_at_k(episodes: &[EpisodeRecord], k: usize) -> Result<f64, EvalError> {
    if episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let hits = episodes.iter().filter(|e| e.hit_at(k)).count();
    Ok(hits as f64 / episodes.len() as f64)
}

/// Fraction of episodes whose ground truth is in the candidate set.
pub fn candidate_recall(episodes: &[EpisodeRecord]) -> Result<f64, EvalError> {
    if episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    Ok(episodes.iter().filter(|e| e.candidate_recall).count() as f64 / episodes.len() as f64)
}

/// Violations among episodes that reached the backend. Zero when none did.
pub fn violation_rate(episodes: &[EpisodeRecord]) -> f64 {
    let answered = episodes.iter().filter(|e| e.reward.is_some()).count();
    if answered == 0 {
        return 0.0;
    }
    episodes.iter().filter(|e| e.violation.is_some()).count() as f64 / answered as f64
}

/// Mean reward over rewarded episodes.
pub fn mean_reward(episodes: &[EpisodeRecord]) -> Option<f64> {
    let rs: Vec<f64> = episodes.iter().filter_map(|e| e.reward.map(|r| r.r)).collect();
    if rs.is_empty() {
        None
    } else {
        Some(rs.iter().sum::<f64>() / rs.len() as f64)
    }
}
