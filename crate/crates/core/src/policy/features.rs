//! State and state-action feature vectors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::action::{ActionSpace, PromptAction};
use crate::discovery::Candidate;
use crate::taxonomy::{IntentVocabulary, TimeSlot};

/// Trajectory lengths at or above this saturate the length feature.
const LEN_CAP: f64 = 20.0;
/// Mobility radius saturating the radius feature, km.
const RADIUS_CAP_KM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Slot one-hot, intent multi-hot, log trajectory length, radius.
    pub context: Vec<f64>,
    /// Candidate-set summary.
    pub phi: Vec<f64>,
    /// Previous action of this user, zero before the first one.
    pub psi: Vec<f64>,
}

impl State {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.context.len() + self.phi.len() + self.psi.len());
        v.extend_from_slice(&self.context);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn dim(&self) -> usize {
        self.context.len() + self.phi.len() + self.psi.len()
    }
}

pub const PHI_DIM: usize = 5;

/// State dimension for a vocabulary and action space.
pub fn state_dim(vocab: &IntentVocabulary, space: &ActionSpace) -> usize {
    TimeSlot::ALL.len() + vocab.len() + 2 + PHI_DIM + space.dim()
}

/// |C|/max, distinct categories/|C|, and mean/min/std distance over R̄,
/// each clamped to [0, 1]. Zero for an empty set.
pub fn candidate_summary(candidates: &[Candidate], max_candidates: usize, r_bar_km: f64) -> Vec<f64> {
    if candidates.is_empty() {
        return vec![0.0; PHI_DIM];
    }
    let n = candidates.len() as f64;
    let cats: BTreeSet<&str> = candidates.iter().map(|c| c.category.as_str()).collect();
    let mean = candidates.iter().map(|c| c.distance_km).sum::<f64>() / n;
    let min = candidates.iter().map(|c| c.distance_km).fold(f64::INFINITY, f64::min);
    let var = candidates.iter().map(|c| (c.distance_km - mean).powi(2)).sum::<f64>() / n;
    let unit = |x: f64| x.clamp(0.0, 1.0);
    vec![
        unit(n / max_candidates.max(1) as f64),
        unit(cats.len() as f64 / n),
        unit(mean / r_bar_km),
        unit(min / r_bar_km),
        unit(var.sqrt() / r_bar_km),
    ]
}

#[allow(clippy::too_many_arguments)]
pub fn encode_state(
    slot: TimeSlot,
    intents: &[String],
    vocab: &IntentVocabulary,
    trajectory_len: usize,
    mobility_radius_km: f64,
    candidates: &[Candidate],
    max_candidates: usize,
    r_bar_km: f64,
    previous: Option<&PromptAction>,
    space: &ActionSpace,
) -> State {
    let mut context = vec![0.0; TimeSlot::ALL.len() + vocab.len() + 2];
    context[slot.index()] = 1.0;
    for i in intents {
        if let Some(k) = vocab.index_of(i) {
            context[TimeSlot::ALL.len() + k] = 1.0;
        }
    }
    let base = TimeSlot::ALL.len() + vocab.len();
    context[base] = ((1.0 + trajectory_len as f64).ln() / (1.0 + LEN_CAP).ln()).min(1.0);
    let radius = if mobility_radius_km.is_finite() { mobility_radius_km } else { 0.0 };
    context[base + 1] = (radius / RADIUS_CAP_KM).clamp(0.0, 1.0);

    State {
        context,
        phi: candidate_summary(candidates, max_candidates, r_bar_km),
        psi: previous.map_or_else(|| vec![0.0; space.dim()], |a| space.encode(a)),
    }
}

/// [state | M one-hot | mixture one-hot | ordering one-hot | style one-hot]
pub fn encode_features(state: &State, action: &PromptAction, space: &ActionSpace) -> Vec<f64> {
    let mut v = state.to_vec();
    v.extend(space.encode(action));
    v
}
