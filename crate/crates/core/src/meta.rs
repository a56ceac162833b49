//! Provenance stamped into every artifact the CLI writes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        ArtifactMeta { config_hash: config_hash.into(), seed, version: VERSION.to_string() }
    }

    /// Placeholder used by library callers that do not track a config.
    pub fn detached(seed: u64) -> Self {
        ArtifactMeta::new("none", seed)
    }
}

/// Hex SHA-256 of arbitrary bytes, truncated to 16 hex chars.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// FNV-1a over a sequence of byte slices, with a separator between parts.
pub(crate) fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(base ^ mix64(stream))
}
