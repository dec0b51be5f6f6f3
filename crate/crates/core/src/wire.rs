//! JSON bodies exchanged between the service and its clients.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::imagination::{FidelityTier, TierStats};
use crate::procgen::{GenerationParams, NodeLocation, NodeRecord};
use crate::schema::GeneratedDocument;
use crate::world::{ActionEvent, VoyagerSession};

/// Every non-2xx response carries this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

/// Query string selecting a universe. Absent fields fall back to the service defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UniverseQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub galaxies: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systems: Option<u32>,
}

impl UniverseQuery {
    pub fn resolve(&self, defaults: &GenerationParams) -> GenerationParams {
        GenerationParams {
            world_seed: self.world_seed.unwrap_or(defaults.world_seed),
            density: self.density.unwrap_or(defaults.density),
            galaxy_count: self.galaxies.unwrap_or(defaults.galaxy_count),
            systems_per_galaxy: self.systems.unwrap_or(defaults.systems_per_galaxy),
        }
    }

    pub fn from_params(p: &GenerationParams) -> Self {
        UniverseQuery {
            world_seed: Some(p.world_seed),
            density: Some(p.density),
            galaxies: Some(p.galaxy_count),
            systems: Some(p.systems_per_galaxy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub node_id: String,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResponse {
    pub node: NodeRecord,
    pub location: NodeLocation,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BriefResponse {
    pub node_id: String,
    pub plugin: String,
    pub tier_used: FidelityTier,
    pub retries: u32,
    pub seeded_sampling: bool,
    pub document: GeneratedDocument,
}

/// Pointer to a brief synthesized as a side effect of `scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BriefRef {
    pub node_id: String,
    pub plugin: String,
    pub tier_used: FidelityTier,
    pub href: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub tick: u64,
    pub universe_params: GenerationParams,
    pub voyager: VoyagerSession,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brief: Option<BriefRef>,
}

/// One committed action, as written to the session snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLine {
    pub session_id: String,
    /// Parameters the session was created with, so replay does not depend on service defaults.
    pub origin: GenerationParams,
    pub tick: u64,
    pub action: ActionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub version: String,
    pub uptime_secs: u64,
    pub provider_configured: bool,
    pub cache_entries: usize,
    pub sessions: usize,
    pub tiers: TierStats,
}

/// Payload of a `status` stream event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamStatus {
    pub state: String,
    pub node_id: String,
    pub plugin: String,
}

/// Payload of a `chunk` stream event: the next slice of one text field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamChunk {
    pub field: String,
    pub delta: String,
}

/// Splits `text` into word-aligned pieces of roughly `width` bytes whose
/// concatenation is `text`.
pub fn chunk_text(text: &str, width: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in text.split_inclusive(' ') {
        if !cur.is_empty() && cur.len() + word.len() > width {
            out.push(std::mem::take(&mut cur));
        }
        cur.push_str(word);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Density bits pick the universe, so JSON must carry them exactly.
        #[test]
        fn params_survive_json_exactly(seed in any::<u64>(), density in 0.2f64..=3.0) {
            let p = GenerationParams { world_seed: seed, density, ..Default::default() };
            let back: GenerationParams = serde_json::from_slice(&serde_json::to_vec(&p).unwrap()).unwrap();
            prop_assert_eq!(back.density.to_bits(), density.to_bits());
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn chunks_reassemble() {
        let text = "a long line of words that should be split into several pieces";
        let parts = chunk_text(text, 12);
        assert!(parts.len() > 3);
        assert_eq!(parts.concat(), text);
        assert!(chunk_text("", 8).is_empty());
    }

    #[test]
    fn query_fills_defaults() {
        let d = GenerationParams::default();
        let q = UniverseQuery {
            density: Some(2.0),
            ..Default::default()
        };
        let p = q.resolve(&d);
        assert_eq!(p.density, 2.0);
        assert_eq!(p.world_seed, d.world_seed);
        assert_eq!(UniverseQuery::from_params(&p).resolve(&GenerationParams::default()), p);
    }
}
