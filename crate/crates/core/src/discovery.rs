//! Candidate discovery by breadth-first expansion of relation-path
//! templates, and enumeration of the instance paths that support each
//! candidate.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::CheckIn;
use crate::kg::{haversine, Direction, EntityKind, EntityRef, Kg, KgError, NodeId, Relation};

/// Rationale family a template produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathType {
    Intent,
    Grid,
    Time,
    Category,
    Near,
}

impl PathType {
    pub const ALL: [PathType; 5] = [PathType::Intent, PathType::Grid, PathType::Time, PathType::Category, PathType::Near];

    pub fn index(self) -> usize {
        PathType::ALL.iter().position(|t| *t == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            PathType::Intent => "intent",
            PathType::Grid => "grid",
            PathType::Time => "time",
            PathType::Category => "category",
            PathType::Near => "near",
        }
    }
}

impl fmt::Display for PathType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    IntentCategory,
    GridProximity,
    SpatialNear,
    TemporalPref,
    CategoryAffinity,
}

impl TemplateName {
    pub fn path_type(self) -> PathType {
        match self {
            TemplateName::IntentCategory => PathType::Intent,
            TemplateName::GridProximity => PathType::Grid,
            TemplateName::SpatialNear => PathType::Near,
            TemplateName::TemporalPref => PathType::Time,
            TemplateName::CategoryAffinity => PathType::Category,
        }
    }
}

/// How the spatial template is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearVariant {
    /// user -visited-> POI -near-> POI
    #[default]
    Direct,
    /// user -visited-> POI -near-> POI -inGrid-> Grid <-inGrid- POI
    ThenGrid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTemplate {
    pub name: TemplateName,
    pub steps: Vec<(Relation, Direction)>,
}

impl PathTemplate {
    pub fn new(name: TemplateName, near: NearVariant) -> Self {
        use Direction::{In, Out};
        use Relation::*;
        let steps = match name {
            TemplateName::IntentCategory => vec![(HasProfile, Out), (PrefersIntent, Out), (ServesCategory, Out), (InCategory, In)],
            TemplateName::GridProximity => vec![(Visited, Out), (InGrid, Out), (InGrid, In)],
            TemplateName::SpatialNear => match near {
                NearVariant::Direct => vec![(Visited, Out), (Near, Out)],
                NearVariant::ThenGrid => vec![(Visited, Out), (Near, Out), (InGrid, Out), (InGrid, In)],
            },
            TemplateName::TemporalPref => vec![(HasProfile, Out), (PrefersTime, Out), (ActiveInTime, In)],
            TemplateName::CategoryAffinity => vec![(Visited, Out), (InCategory, Out), (InCategory, In)],
        };
        PathTemplate { name, steps }
    }

    pub fn path_type(&self) -> PathType {
        self.name.path_type()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePath {
    pub template: TemplateName,
    pub nodes: Vec<EntityRef>,
}

impl EvidencePath {
    /// Hop count.
    pub fn length(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn path_type(&self) -> PathType {
        self.template.path_type()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "id")]
    pub poi_id: String,
    pub category: String,
    #[serde(rename = "distance")]
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryConfig {
    pub hop_cap: usize,
    pub r_bar_km: f64,
    pub max_candidates: usize,
    pub max_paths_per_candidate: usize,
    /// Drop POIs the user already visited in training.
    pub exclude_visited: bool,
    pub near_variant: NearVariant,
    pub templates: Vec<TemplateName>,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            hop_cap: 4,
            r_bar_km: 15.0,
            max_candidates: 20,
            max_paths_per_candidate: 50,
            exclude_visited: false,
            near_variant: NearVariant::Direct,
            templates: vec![
                TemplateName::IntentCategory,
                TemplateName::GridProximity,
                TemplateName::SpatialNear,
                TemplateName::TemporalPref,
                TemplateName::CategoryAffinity,
            ],
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hop_cap == 0 || self.max_candidates == 0 || self.max_paths_per_candidate == 0 {
            return Err("hop_cap, max_candidates and max_paths_per_candidate must be >= 1".into());
        }
        if !(self.r_bar_km > 0.0 && self.r_bar_km.is_finite()) {
            return Err(format!("r_bar_km must be > 0, got {}", self.r_bar_km));
        }
        if self.templates.is_empty() {
            return Err("at least one path template is required".into());
        }
        Ok(())
    }

    /// Enabled templates within the hop cap, in configured order.
    pub fn active_templates(&self) -> Vec<PathTemplate> {
        self.templates
            .iter()
            .map(|n| PathTemplate::new(*n, self.near_variant))
            .filter(|t| t.len() <= self.hop_cap)
            .collect()
    }
}

fn user_node(kg: &Kg, user: &str) -> Result<NodeId, KgError> {
    let u = EntityRef::user(user);
    kg.node_id(&u).ok_or(KgError::UnknownEntity(u))
}

/// Terminal nodes of a template, expanded one level at a time.
fn bfs_terminals(kg: &Kg, start: NodeId, template: &PathTemplate) -> Vec<NodeId> {
    let mut frontier = vec![start];
    for (rel, dir) in &template.steps {
        let mut next = BTreeSet::new();
        for &n in &frontier {
            next.extend(kg.neighbor_ids(n, *rel, *dir));
        }
        frontier = next.into_iter().collect();
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

/// Candidates before truncation, in discovery order.
pub fn discover_all(kg: &Kg, user: &str, last: &CheckIn, config: &DiscoveryConfig) -> Result<Vec<Candidate>, KgError> {
    let start = user_node(kg, user)?;
    let visited: HashSet<NodeId> = if config.exclude_visited {
        kg.neighbor_ids(start, Relation::Visited, Direction::Out).into_iter().collect()
    } else {
        HashSet::new()
    };
    let mut seen: HashSet<NodeId> = HashSet::new();
    let mut out = Vec::new();
    for template in config.active_templates() {
        let mut found: Vec<(f64, &str, NodeId)> = Vec::new();
        for n in bfs_terminals(kg, start, &template) {
            let e = kg.node(n);
            if e.kind != EntityKind::Poi || e.id == last.poi_id || visited.contains(&n) || seen.contains(&n) {
                continue;
            }
            let Some(coords) = kg.poi_coords(&e.id) else { continue };
            let d = haversine(last.coords(), coords);
            if d <= config.r_bar_km {
                found.push((d, &e.id, n));
            }
        }
        // within one template every terminal sits at the same depth; nearer first
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        for (d, id, n) in found {
            seen.insert(n);
            out.push(Candidate {
                poi_id: id.to_string(),
                category: kg.poi_category(id).unwrap_or_default().to_string(),
                distance_km: d,
            });
        }
    }
    Ok(out)
}

/// Discovered candidates truncated to `max_candidates`.
pub fn discover_candidates(kg: &Kg, user: &str, last: &CheckIn, config: &DiscoveryConfig) -> Result<Vec<Candidate>, KgError> {
    let mut all = discover_all(kg, user, last, config)?;
    all.truncate(config.max_candidates);
    Ok(all)
}

fn extend_walks(kg: &Kg, walk: &mut Vec<NodeId>, steps: &[(Relation, Direction)], out: &mut Vec<Vec<NodeId>>) {
    match steps.split_first() {
        None => out.push(walk.clone()),
        Some(((rel, dir), rest)) => {
            let here = *walk.last().expect("walk starts at the user");
            for n in kg.neighbor_ids(here, *rel, *dir) {
                walk.push(n);
                extend_walks(kg, walk, rest, out);
                walk.pop();
            }
        }
    }
}

/// Every template instance from `user` ending at `poi`, shortest first
/// (ties keep template order), truncated to `max_paths_per_candidate`.
pub fn enumerate_all_paths(kg: &Kg, user: &str, poi: &str, config: &DiscoveryConfig) -> Result<Vec<EvidencePath>, KgError> {
    let start = user_node(kg, user)?;
    let Some(target) = kg.node_id(&EntityRef::poi(poi)) else { return Ok(Vec::new()) };
    let mut paths = Vec::new();
    for template in config.active_templates() {
        let Some(((last_rel, last_dir), prefix)) = template.steps.split_last() else { continue };
        let mut prefixes = Vec::new();
        extend_walks(kg, &mut vec![start], prefix, &mut prefixes);
        for mut walk in prefixes {
            let end = *walk.last().expect("nonempty");
            if kg.has_edge(end, *last_rel, *last_dir, target) {
                walk.push(target);
                paths.push(EvidencePath { template: template.name, nodes: walk.iter().map(|n| kg.node(*n).clone()).collect() });
            }
        }
    }
    paths.sort_by_key(EvidencePath::length);
    Ok(paths)
}

pub fn enumerate_evidence_paths(kg: &Kg, user: &str, poi: &str, config: &DiscoveryConfig) -> Result<Vec<EvidencePath>, KgError> {
    let mut paths = enumerate_all_paths(kg, user, poi, config)?;
    paths.truncate(config.max_paths_per_candidate);
    Ok(paths)
}
