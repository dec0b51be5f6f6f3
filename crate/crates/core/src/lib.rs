//! Engine for a neuro-symbolic web world: deterministic code owns the world's
//! physics and geometry, a language-model provider fills a schema-checked
//! imagination layer, and caches plus templates keep the world running when
//! the model is slow or absent.
//!
//! * [`procgen`]: coordinate hashing and universe generation
//! * [`world`]: physics state and the transition function
//! * [`schema`]: typed document contracts and validation
//! * [`imagination`]: provider calls, seed-keyed cache, template fallback
//! * [`plugins`]: the mission-brief and field-log pipelines
//! * [`wire`]: JSON bodies shared by the service and its clients

pub mod imagination;
pub mod names;
pub mod plugins;
pub mod procgen;
pub mod schema;
pub mod wire;
pub mod world;

pub use imagination::{FidelityTier, Imagination, Synthesis, SynthesisOptions};
pub use plugins::{PluginRegistry, PluginSpec};
pub use procgen::{GenerationParams, NodeRecord, NodeSeed, Universe, UniverseLayout};
pub use schema::{GeneratedDocument, SchemaDef, SchemaRegistry};
pub use world::{ActionEvent, ActionKind, DomainError, PhysicsState, VoyagerSession};

/// mix64 test vectors, one `input_hex<TAB>output_hex` pair per line.
pub const MIX64_VECTORS: &str = include_str!("../testdata/mix64_vectors.tsv");
