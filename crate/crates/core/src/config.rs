//! The run configuration: one TOML file, dotted `--set` overrides, range
//! validation, and the hash stamped into every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, OracleParams, WorldConfig};
use crate::discovery::DiscoveryConfig;
use crate::eval::EvalConfig;
use crate::ingest::{ColumnMap, SplitFractions, SplitScope, WindowMode};
use crate::kg::KgConfig;
use crate::meta::{short_hash, ArtifactMeta};
use crate::policy::{Distractors, PolicyConfig, RewardConfig};
use crate::taxonomy::IntentVocabulary;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding every artifact of a run.
    pub work_dir: PathBuf,
    /// Raw check-in file for `ingest`; when unset, the file written by
    /// `simulate` is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { work_dir: PathBuf::from("run"), raw: None }
    }
}

impl PathsConfig {
    pub fn world(&self) -> PathBuf {
        self.work_dir.join("world.json")
    }
    pub fn sim_checkins(&self) -> PathBuf {
        self.work_dir.join("checkins.tsv")
    }
    pub fn split_dir(&self) -> PathBuf {
        self.work_dir.join("split")
    }
    pub fn kg(&self) -> PathBuf {
        self.work_dir.join("kg.ndjson")
    }
    pub fn profiles(&self) -> PathBuf {
        self.work_dir.join("profiles.json")
    }
    pub fn posterior(&self) -> PathBuf {
        self.work_dir.join("posterior.bin")
    }
    pub fn train_log(&self) -> PathBuf {
        self.work_dir.join("train_log.csv")
    }
    pub fn reports(&self) -> PathBuf {
        self.work_dir.join("reports")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub columns: ColumnMap,
    pub min_poi_visits: usize,
    pub min_user_checkins: usize,
    pub window_h: f64,
    pub window_mode: WindowMode,
    pub split: SplitFractions,
    pub scope: SplitScope,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            columns: ColumnMap::default(),
            min_poi_visits: 10,
            min_user_checkins: 10,
            window_h: 24.0,
            window_mode: WindowMode::Anchored,
            split: SplitFractions::default(),
            scope: SplitScope::Global,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_poi_visits == 0 || self.min_user_checkins == 0 {
            return Err("ingest thresholds must be >= 1".into());
        }
        if !(self.window_h > 0.0 && self.window_h.is_finite()) {
            return Err(format!("ingest.window_h must be > 0, got {}", self.window_h));
        }
        let SplitFractions { train, val } = self.split;
        if !(train > 0.0 && train < 1.0 && (0.0..=0.5).contains(&val) && train + val < 1.0) {
            return Err(format!("ingest.split fractions invalid: train {train}, val {val}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvidenceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distractors: Option<Distractors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stage derives its streams from it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub vocab: IntentVocabulary,
    pub kg: KgConfig,
    pub discovery: DiscoveryConfig,
    pub evidence: EvidenceConfig,
    pub policy: PolicyConfig,
    pub reward: RewardConfig,
    pub backend: BackendConfig,
    pub oracle: OracleParams,
    pub world: WorldConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: PathsConfig::default(),
            ingest: IngestConfig::default(),
            vocab: IntentVocabulary::default(),
            kg: KgConfig::default(),
            discovery: DiscoveryConfig::default(),
            evidence: EvidenceConfig::default(),
            policy: PolicyConfig::default(),
            reward: RewardConfig::default(),
            backend: BackendConfig::default(),
            oracle: OracleParams::default(),
            world: WorldConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            self.ingest.validate(),
            self.kg.validate().map_err(|e| e.to_string()),
            self.discovery.validate(),
            self.policy.validate(),
            self.reward.validate(),
            self.backend.validate(),
            self.oracle.validate(),
            self.world.validate(),
            self.eval.validate(),
        ];
        for c in checks {
            c.map_err(ConfigError::Invalid)?;
        }
        if self.vocab.is_empty() {
            return Err(ConfigError::Invalid("vocab.labels must not be empty".into()));
        }
        if let Some(d) = self.evidence.distractors {
            if d.informative_cap == 0 {
                return Err(ConfigError::Invalid("evidence.distractors.informative_cap must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Short hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn meta(&self) -> ArtifactMeta {
        ArtifactMeta::new(self.hash(), self.seed)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `a.b.c=value` override; the value is read as TOML and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Override(format!("{assignment} (`{p}` is not a table)"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// First key of `user` with no counterpart in `known`, as a dotted path.
/// Keys whose default is absent from the serialized form (unset options)
/// are not descended into.
fn find_unknown(user: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match known.get(k) {
            Some(toml::Value::Table(kt)) => {
                if let toml::Value::Table(ut) = v {
                    // maps with free-form keys
                    if path == "vocab.serves" {
                        continue;
                    }
                    if let Some(found) = find_unknown(ut, kt, &path) {
                        return Some(found);
                    }
                }
            }
            Some(_) => {}
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => return Some(path),
        }
    }
    None
}

const OPTIONAL_KEYS: [&str; 2] = ["paths.raw", "evidence.distractors"];

/// Builds a config from an already-parsed table plus overrides.
pub fn config_from_table(mut table: toml::Table, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let value = toml::Value::Table(table.clone());
    let cfg: RunConfig = match value.try_into() {
        Ok(c) => c,
        Err(e) => {
            let known = toml::Table::try_from(RunConfig::default()).expect("default config serializes");
            if let Some(key) = find_unknown(&table, &known, "") {
                return Err(ConfigError::UnknownKey(key));
            }
            return Err(ConfigError::Parse(e.to_string()));
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the file (if any), applies `--set` overrides and validates.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::Read { path: p.display().to_string(), source: e })?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    config_from_table(table, overrides)
}
