use std::collections::{BTreeMap, BTreeSet};

use super::geo::{haversine, EARTH_RADIUS_KM};
use super::grid::{build_grid_cells, default_k, GridCells};
use super::profile::{compute_profile, Profile};
use super::{EntityKind, EntityRef, Kg, KgBuilder, KgConfig, KgError, Relation};
use crate::ingest::{CheckIn, DatasetSplit};
use crate::taxonomy::{category_group, IntentVocabulary, TimeSlot};

/// Everything the downstream stages need from the graph stage.
#[derive(Debug, Clone)]
pub struct GraphBundle {
    pub kg: Kg,
    pub grids: GridCells,
    pub profiles: BTreeMap<String, Profile>,
}

/// Grids, profiles and graph from the training split.
pub fn build_world_graph(
    split: &DatasetSplit,
    vocab: &IntentVocabulary,
    config: &KgConfig,
    seed: u64,
) -> Result<GraphBundle, KgError> {
    config.validate()?;
    let train: Vec<&CheckIn> = split.train_checkins().collect();
    let mut pois: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for c in &train {
        pois.entry(c.poi_id.as_str()).or_insert((c.lat, c.lon));
    }
    let poi_list: Vec<(String, f64, f64)> = pois.iter().map(|(k, v)| (k.to_string(), v.0, v.1)).collect();
    if poi_list.is_empty() {
        return Err(KgError::Config("training split has no check-ins".into()));
    }
    let k = if config.k_grids == 0 { default_k(&poi_list) } else { config.k_grids };
    let grids = build_grid_cells(&poi_list, k, seed)?;

    let users: BTreeSet<&str> = train.iter().map(|c| c.user_id.as_str()).collect();
    let mut by_user: BTreeMap<&str, Vec<&CheckIn>> = BTreeMap::new();
    for c in &train {
        by_user.entry(c.user_id.as_str()).or_default().push(c);
    }
    let mut profiles = BTreeMap::new();
    for u in users {
        let p = compute_profile(u, &by_user[u], &grids, vocab, config.profile_top_n)?;
        profiles.insert(u.to_string(), p);
    }
    let kg = build_kg(&train, &grids, &profiles, vocab, config)?;
    Ok(GraphBundle { kg, grids, profiles })
}

/// All POI pairs (i < j) with haversine distance `<= r_km`.
pub(crate) fn near_pairs(pois: &[(String, f64, f64)], r_km: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..pois.len()).collect();
    order.sort_by(|&a, &b| pois[a].1.total_cmp(&pois[b].1));
    // latitude difference alone lower-bounds the distance; the slack covers rounding
    let dlat = r_km / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0) + 1e-9;
    let mut out = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if pois[j].1 - pois[i].1 > dlat {
                break;
            }
            if haversine((pois[i].1, pois[i].2), (pois[j].1, pois[j].2)) <= r_km {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Emits every relation of the schema from training check-ins and profiles.
pub fn build_kg(
    train: &[&CheckIn],
    grids: &GridCells,
    profiles: &BTreeMap<String, Profile>,
    vocab: &IntentVocabulary,
    config: &KgConfig,
) -> Result<Kg, KgError> {
    config.validate()?;
    let mut b = KgBuilder::new();

    for slot in TimeSlot::ALL {
        b.add_entity(EntityRef::new(EntityKind::TimeSlot, slot.label()));
    }
    for intent in &vocab.labels {
        b.add_entity(EntityRef::new(EntityKind::Intent, intent.clone()));
    }

    let mut pois: BTreeMap<&str, (f64, f64, &str)> = BTreeMap::new();
    let mut slot_counts: BTreeMap<(&str, TimeSlot), usize> = BTreeMap::new();
    for c in train {
        pois.entry(c.poi_id.as_str()).or_insert((c.lat, c.lon, c.category.as_str()));
        *slot_counts.entry((c.poi_id.as_str(), c.time_slot())).or_default() += 1;
        b.add_triple(EntityRef::user(c.user_id.clone()), Relation::Visited, EntityRef::poi(c.poi_id.clone()))?;
    }

    let mut categories: BTreeSet<&str> = BTreeSet::new();
    for (id, (lat, lon, cat)) in &pois {
        b.add_poi(id, *lat, *lon);
        categories.insert(cat);
        b.add_triple(EntityRef::poi(*id), Relation::InCategory, EntityRef::new(EntityKind::Category, *cat))?;
        if let Some(g) = grids.grid_of(id) {
            b.add_triple(EntityRef::poi(*id), Relation::InGrid, EntityRef::new(EntityKind::Grid, g))?;
        }
    }
    for ((poi, slot), n) in &slot_counts {
        if *n >= config.active_min_checkins {
            b.add_triple(EntityRef::poi(*poi), Relation::ActiveInTime, EntityRef::new(EntityKind::TimeSlot, slot.label()))?;
        }
    }

    let list: Vec<(String, f64, f64)> = pois.iter().map(|(k, v)| (k.to_string(), v.0, v.1)).collect();
    for (i, j) in near_pairs(&list, config.r_near_km) {
        b.add_triple(EntityRef::poi(list[i].0.clone()), Relation::Near, EntityRef::poi(list[j].0.clone()))?;
    }

    for (user, p) in profiles {
        let anchor = EntityRef::new(EntityKind::Profile, user.clone());
        b.add_triple(EntityRef::user(user.clone()), Relation::HasProfile, anchor.clone())?;
        for i in &p.preferred_intents {
            b.add_triple(anchor.clone(), Relation::PrefersIntent, EntityRef::new(EntityKind::Intent, i.clone()))?;
        }
        for t in &p.preferred_timeslots {
            b.add_triple(anchor.clone(), Relation::PrefersTime, EntityRef::new(EntityKind::TimeSlot, t.label()))?;
        }
    }

    for intent in &vocab.labels {
        for cat in &categories {
            if vocab.serves_group(intent, category_group(cat)) {
                b.add_triple(
                    EntityRef::new(EntityKind::Intent, intent.clone()),
                    Relation::ServesCategory,
                    EntityRef::new(EntityKind::Category, *cat),
                )?;
            }
        }
    }
    Ok(b.build())
}
