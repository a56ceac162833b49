//! Per-user profile statistics derived from training check-ins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geo::haversine;
use super::grid::GridCells;
use super::KgError;
use crate::ingest::CheckIn;
use crate::taxonomy::{IntentVocabulary, TimeSlot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub user_id: String,
    pub top_categories: Vec<String>,
    pub hotspot_grids: Vec<String>,
    pub mobility_radius_km: f64,
    pub preferred_timeslots: Vec<TimeSlot>,
    pub preferred_intents: Vec<String>,
    /// Category -> share of the user's training check-ins.
    pub category_share: BTreeMap<String, f64>,
}

/// Keys sorted by descending count, ties by ascending key; first `n` kept.
fn top_by_count<K: Ord + Clone>(counts: &BTreeMap<K, usize>, n: usize) -> Vec<K> {
    let mut v: Vec<(&K, &usize)> = counts.iter().collect();
    // BTreeMap iteration is already key-ascending, so a stable sort keeps the tie rule
    v.sort_by(|a, b| b.1.cmp(a.1));
    v.into_iter().take(n).map(|(k, _)| k.clone()).collect()
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Builds the profile of `user` from its training check-ins. Intents are
/// counted from the categories visited, via the vocabulary's serve table.
pub fn compute_profile(
    user: &str,
    checkins: &[&CheckIn],
    grids: &GridCells,
    vocab: &IntentVocabulary,
    top_n: usize,
) -> Result<Profile, KgError> {
    let mine: Vec<&CheckIn> = checkins.iter().copied().filter(|c| c.user_id == user).collect();
    if mine.is_empty() {
        return Err(KgError::NoHistory(user.to_string()));
    }

    let mut cats: BTreeMap<String, usize> = BTreeMap::new();
    let mut cells: BTreeMap<String, usize> = BTreeMap::new();
    let mut slots: BTreeMap<TimeSlot, usize> = BTreeMap::new();
    let mut intents: BTreeMap<String, usize> = BTreeMap::new();
    for c in &mine {
        *cats.entry(c.category.clone()).or_default() += 1;
        if let Some(g) = grids.grid_of(&c.poi_id) {
            *cells.entry(g.to_string()).or_default() += 1;
        }
        *slots.entry(c.time_slot()).or_default() += 1;
        for i in vocab.intents_for_category(&c.category) {
            *intents.entry(i.to_string()).or_default() += 1;
        }
    }

    let n = mine.len() as f64;
    let centroid = (
        mine.iter().map(|c| c.lat).sum::<f64>() / n,
        mine.iter().map(|c| c.lon).sum::<f64>() / n,
    );
    let mut dists: Vec<f64> = mine.iter().map(|c| haversine(centroid, c.coords())).collect();
    dists.sort_by(f64::total_cmp);

    Ok(Profile {
        user_id: user.to_string(),
        top_categories: top_by_count(&cats, top_n),
        hotspot_grids: top_by_count(&cells, top_n),
        mobility_radius_km: percentile(&dists, 0.9),
        preferred_timeslots: top_by_count(&slots, top_n),
        preferred_intents: top_by_count(&intents, top_n),
        category_share: cats.iter().map(|(k, v)| (k.clone(), *v as f64 / n)).collect(),
    })
}
