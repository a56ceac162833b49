//! Heterogeneous knowledge graph over users, POIs, categories, grid cells,
//! time slots, intents and profile anchors.
//!
//! The graph is built once from training data and is immutable afterwards.
//! Every edge is a typed triple whose endpoint kinds must match the schema
//! row of its relation; `near` is stored in both directions.

mod build;
pub mod geo;
pub mod grid;
mod profile;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_kg, build_world_graph, GraphBundle};
pub use geo::haversine;
pub use grid::{build_grid_cells, default_k, GridCells};
pub use profile::{compute_profile, Profile};
pub use snapshot::{
    load_profiles, load_snapshot, save_profiles, save_snapshot, ProfileFile, SnapshotHeader, SNAPSHOT_VERSION,
};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityRef),
    #[error("user {0} has no training history")]
    NoHistory(String),
    #[error("triple ({head}, {relation}, {tail}) violates the schema")]
    SchemaViolation { head: EntityRef, relation: Relation, tail: EntityRef },
    #[error("kg config: {0}")]
    Config(String),
    #[error("unsupported snapshot schema version {0}")]
    SnapshotVersion(u32),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    User,
    Poi,
    Category,
    Grid,
    TimeSlot,
    Intent,
    Profile,
}

impl EntityKind {
    pub fn label(self) -> &'static str {
        match self {
            EntityKind::User => "User",
            EntityKind::Poi => "POI",
            EntityKind::Category => "Category",
            EntityKind::Grid => "Grid",
            EntityKind::TimeSlot => "TimeSlot",
            EntityKind::Intent => "Intent",
            EntityKind::Profile => "Profile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        EntityRef { kind, id: id.into() }
    }
    pub fn user(id: impl Into<String>) -> Self {
        Self::new(EntityKind::User, id)
    }
    pub fn poi(id: impl Into<String>) -> Self {
        Self::new(EntityKind::Poi, id)
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.label(), self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    Visited,
    HasProfile,
    PrefersIntent,
    PrefersTime,
    InCategory,
    InGrid,
    ActiveInTime,
    Near,
    /// Intent -> Category: the intent is served by venues of this category.
    ServesCategory,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::Visited,
        Relation::HasProfile,
        Relation::PrefersIntent,
        Relation::PrefersTime,
        Relation::InCategory,
        Relation::InGrid,
        Relation::ActiveInTime,
        Relation::Near,
        Relation::ServesCategory,
    ];

    /// (head kind, tail kind) of the relation's schema row.
    pub fn signature(self) -> (EntityKind, EntityKind) {
        use EntityKind::*;
        match self {
            Relation::Visited => (User, Poi),
            Relation::HasProfile => (User, Profile),
            Relation::PrefersIntent => (Profile, Intent),
            Relation::PrefersTime => (Profile, TimeSlot),
            Relation::InCategory => (Poi, Category),
            Relation::InGrid => (Poi, Grid),
            Relation::ActiveInTime => (Poi, TimeSlot),
            Relation::Near => (Poi, Poi),
            Relation::ServesCategory => (Intent, Category),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Visited => "visited",
            Relation::HasProfile => "hasProfile",
            Relation::PrefersIntent => "prefersIntent",
            Relation::PrefersTime => "prefersTime",
            Relation::InCategory => "inCategory",
            Relation::InGrid => "inGrid",
            Relation::ActiveInTime => "activeInTime",
            Relation::Near => "near",
            Relation::ServesCategory => "servesCategory",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityRef,
    pub relation: Relation,
    pub tail: EntityRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KgConfig {
    pub r_near_km: f64,
    /// 0 selects `max(10, ceil(#POIs / 200))`.
    pub k_grids: usize,
    /// Minimum check-ins in a slot before a POI gets an `activeInTime` edge.
    pub active_min_checkins: usize,
    /// Length of the ranked lists in a profile.
    pub profile_top_n: usize,
}

impl Default for KgConfig {
    fn default() -> Self {
        KgConfig { r_near_km: 10.0, k_grids: 0, active_min_checkins: 1, profile_top_n: 3 }
    }
}

impl KgConfig {
    pub fn validate(&self) -> Result<(), KgError> {
        if !(self.r_near_km > 0.0 && self.r_near_km.is_finite()) {
            return Err(KgError::Config(format!("r_near_km must be > 0, got {}", self.r_near_km)));
        }
        if self.active_min_checkins == 0 || self.profile_top_n == 0 {
            return Err(KgError::Config("active_min_checkins and profile_top_n must be >= 1".into()));
        }
        Ok(())
    }
}

pub(crate) type NodeId = usize;

/// Immutable triple store with per-node sorted adjacency in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kg {
    nodes: Vec<EntityRef>,
    index: HashMap<EntityRef, NodeId>,
    out_edges: Vec<Vec<(Relation, NodeId)>>,
    in_edges: Vec<Vec<(Relation, NodeId)>>,
    poi_coords: BTreeMap<String, (f64, f64)>,
    poi_category: BTreeMap<String, String>,
    triple_count: usize,
}

impl Kg {
    pub fn entity_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triple_count
    }

    pub fn contains(&self, e: &EntityRef) -> bool {
        self.index.contains_key(e)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRef> {
        self.nodes.iter()
    }

    pub fn entities_of(&self, kind: EntityKind) -> impl Iterator<Item = &EntityRef> {
        self.nodes.iter().filter(move |e| e.kind == kind)
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.out_edges.iter().enumerate().flat_map(move |(h, edges)| {
            edges.iter().map(move |(r, t)| Triple {
                head: self.nodes[h].clone(),
                relation: *r,
                tail: self.nodes[*t].clone(),
            })
        })
    }

    pub fn poi_coords(&self, poi: &str) -> Option<(f64, f64)> {
        self.poi_coords.get(poi).copied()
    }

    pub fn poi_category(&self, poi: &str) -> Option<&str> {
        self.poi_category.get(poi).map(String::as_str)
    }

    pub(crate) fn node_id(&self, e: &EntityRef) -> Option<NodeId> {
        self.index.get(e).copied()
    }

    pub(crate) fn node(&self, id: NodeId) -> &EntityRef {
        &self.nodes[id]
    }

    fn slice(edges: &[(Relation, NodeId)], rel: Relation) -> &[(Relation, NodeId)] {
        let lo = edges.partition_point(|(r, _)| *r < rel);
        let hi = edges.partition_point(|(r, _)| *r <= rel);
        &edges[lo..hi]
    }

    /// Neighbor node ids, sorted and de-duplicated.
    pub(crate) fn neighbor_ids(&self, node: NodeId, rel: Relation, dir: Direction) -> Vec<NodeId> {
        let out = || Self::slice(&self.out_edges[node], rel).iter().map(|(_, n)| *n);
        let inc = || Self::slice(&self.in_edges[node], rel).iter().map(|(_, n)| *n);
        match dir {
            Direction::Out => out().collect(),
            Direction::In => inc().collect(),
            Direction::Both => {
                let mut v: Vec<NodeId> = out().chain(inc()).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    pub(crate) fn has_edge(&self, from: NodeId, rel: Relation, dir: Direction, to: NodeId) -> bool {
        let probe = |edges: &[(Relation, NodeId)]| edges.binary_search(&(rel, to)).is_ok();
        match dir {
            Direction::Out => probe(&self.out_edges[from]),
            Direction::In => probe(&self.in_edges[from]),
            Direction::Both => probe(&self.out_edges[from]) || probe(&self.in_edges[from]),
        }
    }

    /// Neighbors of `node` along `relation`, sorted by id.
    pub fn neighbors(&self, node: &EntityRef, relation: Relation, direction: Direction) -> Result<Vec<EntityRef>, KgError> {
        let id = self.node_id(node).ok_or_else(|| KgError::UnknownEntity(node.clone()))?;
        Ok(self.neighbor_ids(id, relation, direction).into_iter().map(|n| self.nodes[n].clone()).collect())
    }
}

/// Accumulates schema-checked triples, then freezes them into a [`Kg`].
#[derive(Debug, Clone, Default)]
pub struct KgBuilder {
    entities: BTreeSet<EntityRef>,
    triples: BTreeSet<(EntityRef, Relation, EntityRef)>,
    poi_coords: BTreeMap<String, (f64, f64)>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, e: EntityRef) -> &mut Self {
        self.entities.insert(e);
        self
    }

    pub fn add_poi(&mut self, id: &str, lat: f64, lon: f64) -> &mut Self {
        self.entities.insert(EntityRef::poi(id));
        self.poi_coords.insert(id.to_string(), (lat, lon));
        self
    }

    /// Inserts a triple after checking it against the schema. A `near`
    /// triple also inserts its reverse; `near` self-loops are rejected.
    pub fn add_triple(&mut self, head: EntityRef, relation: Relation, tail: EntityRef) -> Result<&mut Self, KgError> {
        let (hk, tk) = relation.signature();
        if head.kind != hk || tail.kind != tk || (relation == Relation::Near && head == tail) {
            return Err(KgError::SchemaViolation { head, relation, tail });
        }
        self.entities.insert(head.clone());
        self.entities.insert(tail.clone());
        if relation == Relation::Near {
            self.triples.insert((tail.clone(), relation, head.clone()));
        }
        self.triples.insert((head, relation, tail));
        Ok(self)
    }

    pub fn build(self) -> Kg {
        let nodes: Vec<EntityRef> = self.entities.into_iter().collect();
        let index: HashMap<EntityRef, NodeId> = nodes.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        let triple_count = self.triples.len();
        for (h, r, t) in &self.triples {
            let (hi, ti) = (index[h], index[t]);
            out_edges[hi].push((*r, ti));
            in_edges[ti].push((*r, hi));
        }
        for edges in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            edges.sort_unstable();
        }
        let mut poi_category = BTreeMap::new();
        for (h, r, t) in &self.triples {
            if *r == Relation::InCategory {
                poi_category.entry(h.id.clone()).or_insert_with(|| t.id.clone());
            }
        }
        Kg { nodes, index, out_edges, in_edges, poi_coords: self.poi_coords, poi_category, triple_count }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Kg {
        let mut b = KgBuilder::new();
        b.add_poi("p1", 0.0, 0.0).add_poi("p2", 0.0, 0.01);
        b.add_triple(EntityRef::user("u"), Relation::Visited, EntityRef::poi("p1")).unwrap();
        b.add_triple(EntityRef::poi("p1"), Relation::InCategory, EntityRef::new(EntityKind::Category, "Bar")).unwrap();
        b.add_triple(EntityRef::poi("p2"), Relation::InCategory, EntityRef::new(EntityKind::Category, "Bar")).unwrap();
        b.add_triple(EntityRef::poi("p1"), Relation::Near, EntityRef::poi("p2")).unwrap();
        b.add_entity(EntityRef::new(EntityKind::Grid, "lonely"));
        b.build()
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let kg = small();
        let g = EntityRef::new(EntityKind::Grid, "lonely");
        assert!(kg.neighbors(&g, Relation::InGrid, Direction::Both).unwrap().is_empty());
    }

    #[test]
    fn category_in_edges_list_pois() {
        let kg = small();
        let bar = EntityRef::new(EntityKind::Category, "Bar");
        assert_eq!(
            kg.neighbors(&bar, Relation::InCategory, Direction::In).unwrap(),
            vec![EntityRef::poi("p1"), EntityRef::poi("p2")]
        );
    }

    #[test]
    fn near_is_symmetric() {
        let kg = small();
        assert_eq!(kg.neighbors(&EntityRef::poi("p2"), Relation::Near, Direction::Out).unwrap(), vec![EntityRef::poi("p1")]);
        assert_eq!(kg.neighbors(&EntityRef::poi("p1"), Relation::Near, Direction::Both).unwrap(), vec![EntityRef::poi("p2")]);
        assert_eq!(kg.triple_count(), 5);
    }

    #[test]
    fn unknown_entity() {
        let kg = small();
        assert!(matches!(
            kg.neighbors(&EntityRef::user("ghost"), Relation::Visited, Direction::Out),
            Err(KgError::UnknownEntity(_))
        ));
    }

    #[test]
    fn rejects_illegal_triples() {
        let mut b = KgBuilder::new();
        assert!(b.add_triple(EntityRef::poi("p"), Relation::Visited, EntityRef::user("u")).is_err());
        assert!(b.add_triple(EntityRef::poi("p"), Relation::Near, EntityRef::poi("p")).is_err());
        assert!(b
            .add_triple(EntityRef::user("u"), Relation::InGrid, EntityRef::new(EntityKind::Grid, "g"))
            .is_err());
    }
}
