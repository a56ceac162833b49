//! Versioned on-disk form of the graph: one JSON header line, then one line
//! per entity and one per triple.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::GridCells;
use super::profile::Profile;
use super::{EntityRef, Kg, KgBuilder, KgError, Relation};
use crate::meta::ArtifactMeta;
use crate::Error;

pub const SNAPSHOT_VERSION: u32 = 1;
const FORMAT: &str = "promptpolicy-kg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub schema_version: u32,
    pub meta: ArtifactMeta,
    pub entities: usize,
    pub triples: usize,
    pub r_near_km: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Entity { entity: EntityRef, #[serde(default, skip_serializing_if = "Option::is_none")] coords: Option<(f64, f64)> },
    Triple { h: EntityRef, r: Relation, t: EntityRef },
}

pub fn save_snapshot(path: &Path, kg: &Kg, meta: &ArtifactMeta, r_near_km: f64) -> crate::Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = SnapshotHeader {
        format: FORMAT.into(),
        schema_version: SNAPSHOT_VERSION,
        meta: meta.clone(),
        entities: kg.entity_count(),
        triples: kg.triple_count(),
        r_near_km,
    };
    let mut put = |v: String| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
    put(serde_json::to_string(&header).expect("header serializes"))?;
    for e in kg.entities() {
        let coords = if e.kind == super::EntityKind::Poi { kg.poi_coords(&e.id) } else { None };
        put(serde_json::to_string(&Line::Entity { entity: e.clone(), coords }).expect("entity serializes"))?;
    }
    for t in kg.triples() {
        put(serde_json::to_string(&Line::Triple { h: t.head, r: t.relation, t: t.tail }).expect("triple serializes"))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> crate::Result<(Kg, SnapshotHeader)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| KgError::Snapshot("empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| KgError::Snapshot(format!("header: {e}")))?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != SNAPSHOT_VERSION {
        return Err(KgError::SnapshotVersion(version).into());
    }
    let header: SnapshotHeader =
        serde_json::from_value(raw).map_err(|e| KgError::Snapshot(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(KgError::Snapshot(format!("unexpected format {:?}", header.format)).into());
    }

    let mut b = KgBuilder::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| KgError::Snapshot(format!("line {}: {e}", n + 2)))?;
        match parsed {
            Line::Entity { entity, coords: Some((lat, lon)) } if entity.kind == super::EntityKind::Poi => {
                b.add_poi(&entity.id, lat, lon);
            }
            Line::Entity { entity, .. } => {
                b.add_entity(entity);
            }
            Line::Triple { h, r, t } => {
                b.add_triple(h, r, t)?;
            }
        }
    }
    let kg = b.build();
    if kg.entity_count() != header.entities || kg.triple_count() != header.triples {
        return Err(KgError::Snapshot(format!(
            "counts mismatch: header says {}/{}, file has {}/{}",
            header.entities,
            header.triples,
            kg.entity_count(),
            kg.triple_count()
        ))
        .into());
    }
    Ok((kg, header))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub meta: ArtifactMeta,
    pub grids: GridCells,
    pub profiles: BTreeMap<String, Profile>,
}

pub fn save_profiles(path: &Path, file: &ProfileFile) -> crate::Result<()> {
    let text = serde_json::to_string_pretty(file).expect("profiles serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_profiles(path: &Path) -> crate::Result<ProfileFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
