//! Physics/imagination state split and the deterministic transition function.
//!
//! [`PhysicsState`] is the only thing actions ever touch. Imagination content
//! hangs off node ids but is never read back when deciding whether an action
//! is legal.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagination::FidelityTier;
use crate::procgen::{density_in_range, GenerationParams, Universe};
use crate::schema::{validate_document, GeneratedDocument, SchemaDef, Violation};

pub const INITIAL_FUEL: u32 = 100;
pub const INITIAL_CREDITS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoyagerSession {
    pub session_id: String,
    pub location: String,
    pub fuel: u32,
    pub credits: u32,
    /// Visited nodes in order; the last entry is always `location`.
    pub route: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsState {
    pub universe_params: GenerationParams,
    pub voyager: VoyagerSession,
    pub tick: u64,
}

/// The slice of physics a prompt may see: never the whole state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicsExcerpt {
    pub tick: u64,
    pub location: String,
    pub fuel: u32,
    pub credits: u32,
    /// The last (up to) three route entries, ending at the current location.
    pub recent_route: Vec<String>,
}

impl PhysicsState {
    pub fn excerpt(&self) -> PhysicsExcerpt {
        let route = &self.voyager.route;
        let start = route.len().saturating_sub(3);
        PhysicsExcerpt {
            tick: self.tick,
            location: self.voyager.location.clone(),
            fuel: self.voyager.fuel,
            credits: self.voyager.credits,
            recent_route: route[start..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Travel,
    Scan,
    Reseed,
    SetDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ActionEvent {
    pub fn travel(target: impl Into<String>) -> Self {
        ActionEvent {
            kind: ActionKind::Travel,
            target: Some(target.into()),
            value: None,
        }
    }

    pub fn scan(target: Option<String>) -> Self {
        ActionEvent {
            kind: ActionKind::Scan,
            target,
            value: None,
        }
    }

    pub fn reseed() -> Self {
        ActionEvent {
            kind: ActionKind::Reseed,
            target: None,
            value: None,
        }
    }

    pub fn set_density(value: f64) -> Self {
        ActionEvent {
            kind: ActionKind::SetDensity,
            target: None,
            value: Some(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code", rename_all = "PascalCase")]
pub enum DomainError {
    #[error("no lane connects {from} to {to}")]
    NoLane { from: String, to: String },
    #[error("lane costs {required} fuel but only {available} remains")]
    InsufficientFuel { required: u32, available: u32 },
    #[error("unknown node {node_id}")]
    UnknownNode { node_id: String },
    #[error("density {value} outside the legal range")]
    IllegalDensity { value: f64 },
    #[error("malformed action: {reason}")]
    MalformedAction { reason: String },
}

impl DomainError {
    pub fn code(&self) -> &'static str {
        match self {
            DomainError::NoLane { .. } => "NoLane",
            DomainError::InsufficientFuel { .. } => "InsufficientFuel",
            DomainError::UnknownNode { .. } => "UnknownNode",
            DomainError::IllegalDensity { .. } => "IllegalDensity",
            DomainError::MalformedAction { .. } => "MalformedAction",
        }
    }
}

/// Anything that can hand out the universe for a parameter set.
pub trait UniverseSource {
    fn universe(&self, params: &GenerationParams) -> Arc<Universe>;
}

/// Regenerates on every request.
#[derive(Debug, Default, Clone, Copy)]
pub struct Regenerate;

impl UniverseSource for Regenerate {
    fn universe(&self, params: &GenerationParams) -> Arc<Universe> {
        Arc::new(Universe::generate(params))
    }
}

type ParamsKey = (u64, u64, u32, u32);

/// Logical clock plus entries stamped with their last use.
type Lru = (u64, HashMap<ParamsKey, (u64, Arc<Universe>)>);

fn params_key(p: &GenerationParams) -> ParamsKey {
    (
        p.world_seed,
        p.density.to_bits(),
        p.galaxy_count,
        p.systems_per_galaxy,
    )
}

/// Small least-recently-used memo over generated universes. Generation is
/// pure, so a cached universe is indistinguishable from a fresh one.
#[derive(Debug)]
pub struct UniverseCache {
    capacity: usize,
    inner: Mutex<Lru>,
}

impl UniverseCache {
    pub fn new(capacity: usize) -> Self {
        UniverseCache {
            capacity: capacity.max(1),
            inner: Mutex::new((0, HashMap::new())),
        }
    }
}

impl Default for UniverseCache {
    fn default() -> Self {
        UniverseCache::new(16)
    }
}

impl UniverseSource for UniverseCache {
    fn universe(&self, params: &GenerationParams) -> Arc<Universe> {
        let key = params_key(params);
        {
            let mut guard = self.inner.lock().unwrap();
            let (clock, map) = &mut *guard;
            *clock += 1;
            if let Some(entry) = map.get_mut(&key) {
                entry.0 = *clock;
                return entry.1.clone();
            }
        }
        // Generate outside the lock; a racing duplicate is harmless.
        let universe = Arc::new(Universe::generate(params));
        let mut guard = self.inner.lock().unwrap();
        let (clock, map) = &mut *guard;
        if map.len() >= self.capacity && !map.contains_key(&key) {
            if let Some(oldest) = map.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| *k) {
                map.remove(&oldest);
            }
        }
        map.insert(key, (*clock, universe.clone()));
        universe
    }
}

/// Fresh voyager at the spawn node of `params`' universe.
pub fn initial_state(
    source: &impl UniverseSource,
    params: GenerationParams,
    session_id: impl Into<String>,
) -> PhysicsState {
    let universe = source.universe(&params);
    let spawn = universe.spawn().to_string();
    PhysicsState {
        universe_params: params,
        voyager: VoyagerSession {
            session_id: session_id.into(),
            location: spawn.clone(),
            fuel: INITIAL_FUEL,
            credits: INITIAL_CREDITS,
            route: vec![spawn],
        },
        tick: 0,
    }
}

/// Apply one action against a freshly generated universe.
pub fn apply_action(state: &PhysicsState, action: &ActionEvent) -> Result<PhysicsState, DomainError> {
    apply_action_with(&Regenerate, state, action)
}

/// The transition function. The input state is never modified; a rejected
/// action returns an error and the caller keeps the old state.
pub fn apply_action_with(
    source: &impl UniverseSource,
    state: &PhysicsState,
    action: &ActionEvent,
) -> Result<PhysicsState, DomainError> {
    let mut next = state.clone();
    match action.kind {
        ActionKind::Travel => {
            let target = action
                .target
                .as_deref()
                .ok_or_else(|| DomainError::MalformedAction {
                    reason: "travel requires a target".into(),
                })?;
            let universe = source.universe(&state.universe_params);
            if !universe.contains(target) {
                return Err(DomainError::UnknownNode {
                    node_id: target.to_string(),
                });
            }
            let from = &state.voyager.location;
            let cost = universe
                .lane_cost(from, target)
                .ok_or_else(|| DomainError::NoLane {
                    from: from.clone(),
                    to: target.to_string(),
                })?;
            let fuel = state
                .voyager
                .fuel
                .checked_sub(cost)
                .ok_or(DomainError::InsufficientFuel {
                    required: cost,
                    available: state.voyager.fuel,
                })?;
            next.voyager.fuel = fuel;
            next.voyager.location = target.to_string();
            next.voyager.route.push(target.to_string());
        }
        ActionKind::Scan => {
            if let Some(target) = action.target.as_deref() {
                let universe = source.universe(&state.universe_params);
                if !universe.contains(target) {
                    return Err(DomainError::UnknownNode {
                        node_id: target.to_string(),
                    });
                }
            }
        }
        ActionKind::Reseed => {
            next.universe_params.world_seed = state.universe_params.world_seed.wrapping_add(1);
            relocate(source, &mut next);
        }
        ActionKind::SetDensity => {
            let value = action.value.ok_or_else(|| DomainError::MalformedAction {
                reason: "set_density requires a value".into(),
            })?;
            if !density_in_range(value) {
                return Err(DomainError::IllegalDensity { value });
            }
            next.universe_params.density = value;
            relocate(source, &mut next);
        }
    }
    next.tick = state.tick + 1;
    Ok(next)
}

/// After the universe changes the old lanes no longer apply, so the route
/// thread restarts at the voyager's position: kept if the node survived,
/// otherwise the new spawn.
fn relocate(source: &impl UniverseSource, state: &mut PhysicsState) {
    let universe = source.universe(&state.universe_params);
    if !universe.contains(&state.voyager.location) {
        state.voyager.location = universe.spawn().to_string();
    }
    state.voyager.route = vec![state.voyager.location.clone()];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("location {0} not in universe")]
    LocationMissing(String),
    #[error("route is empty or does not end at the location")]
    RouteDetached,
    #[error("route hop {0} -> {1} has no lane")]
    RouteGap(String, String),
    #[error("universe params invalid")]
    BadParams,
}

/// Checks the physics invariants against `universe`, which must be the
/// universe for `state.universe_params`.
pub fn check_invariants(state: &PhysicsState, universe: &Universe) -> Result<(), InvariantViolation> {
    if state.universe_params.validate().is_err() {
        return Err(InvariantViolation::BadParams);
    }
    let v = &state.voyager;
    if !universe.contains(&v.location) {
        return Err(InvariantViolation::LocationMissing(v.location.clone()));
    }
    if v.route.last() != Some(&v.location) {
        return Err(InvariantViolation::RouteDetached);
    }
    for hop in v.route.windows(2) {
        if universe.lane_cost(&hop[0], &hop[1]).is_none() {
            return Err(InvariantViolation::RouteGap(hop[0].clone(), hop[1].clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocumentKey {
    pub node_id: String,
    pub plugin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub document: GeneratedDocument,
    pub tier: FidelityTier,
}

/// Decorative content keyed by node and plugin. Physics never reads it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImaginationState {
    documents: BTreeMap<DocumentKey, StoredDocument>,
}

impl ImaginationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a document after checking it against `schema`.
    pub fn insert(
        &mut self,
        node_id: impl Into<String>,
        plugin: impl Into<String>,
        document: GeneratedDocument,
        tier: FidelityTier,
        schema: &SchemaDef,
    ) -> Result<(), Vec<Violation>> {
        validate_document(&document, schema)?;
        self.documents.insert(
            DocumentKey {
                node_id: node_id.into(),
                plugin: plugin.into(),
            },
            StoredDocument { document, tier },
        );
        Ok(())
    }

    pub fn get(&self, node_id: &str, plugin: &str) -> Option<&StoredDocument> {
        self.documents.get(&DocumentKey {
            node_id: node_id.to_string(),
            plugin: plugin.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DocumentKey, &StoredDocument)> {
        self.documents.iter()
    }

    #[cfg(test)]
    pub(crate) fn insert_unchecked(&mut self, key: DocumentKey, doc: StoredDocument) {
        self.documents.insert(key, doc);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub physics: PhysicsState,
    pub imagination: ImaginationState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("document for {plugin} references node {node_id}, which does not exist")]
pub struct OrphanDocument {
    pub node_id: String,
    pub plugin: String,
}

/// Pair the two layers after checking every document hangs off a real node.
pub fn compose_state(
    source: &impl UniverseSource,
    physics: PhysicsState,
    imagination: ImaginationState,
) -> Result<WorldState, OrphanDocument> {
    let universe = source.universe(&physics.universe_params);
    if let Some((key, _)) = imagination
        .iter()
        .find(|(key, _)| !universe.contains(&key.node_id))
    {
        return Err(OrphanDocument {
            node_id: key.node_id.clone(),
            plugin: key.plugin.clone(),
        });
    }
    Ok(WorldState {
        physics,
        imagination,
    })
}
