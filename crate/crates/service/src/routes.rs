use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::channel::mpsc;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use wwm_core::plugins::MISSION_BRIEF;
use wwm_core::schema::FieldKind;
use wwm_core::wire::{
    chunk_text, ActionResponse, BriefRef, BriefResponse, MetaResponse, Neighbor, NodeResponse, SnapshotLine,
    StreamChunk, StreamStatus, UniverseQuery,
};
use wwm_core::world::{apply_action_with, initial_state, PhysicsExcerpt, UniverseSource};
use wwm_core::{
    ActionEvent, ActionKind, FidelityTier, GenerationParams, NodeRecord, PluginSpec, SynthesisOptions, Universe,
};

use crate::error::ApiError;
use crate::sessions::{valid_session_id, SessionStore};
use crate::AppState;

/// Bumped whenever the universe serialization changes shape.
const LAYOUT_REVISION: &str = "1";
const CHUNK_WIDTH: usize = 24;
pub const TIER_HEADER: &str = "x-tier-used";

type AppResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/universe", get(get_universe))
        .route("/api/node/{id}", get(get_node))
        .route("/api/node/{id}/brief", get(get_brief))
        .route("/api/voyager/{session}/action", post(post_action))
        .route("/api/plugins", get(get_plugins))
        .route("/api/meta", get(get_meta))
        .with_state(state)
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> AppResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request("MalformedQuery", e.body_text()))
}

fn params_of(state: &AppState, q: &UniverseQuery) -> AppResult<GenerationParams> {
    let params = q.resolve(&state.config.defaults);
    params.validate()?;
    Ok(params)
}

/// Strong entity tag for a universe: a digest of everything the body depends on.
pub fn universe_etag(p: &GenerationParams) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "layout:{LAYOUT_REVISION};seed:{};density:{:016x};galaxies:{};systems:{}",
            p.world_seed,
            p.density.to_bits(),
            p.galaxy_count,
            p.systems_per_galaxy
        )
        .as_bytes(),
    );
    format!("\"{}\"", hex::encode(&h.finalize()[..16]))
}

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .any(|t| t == "*" || t == etag)
}

async fn get_universe(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    q: Result<Query<UniverseQuery>, QueryRejection>,
) -> AppResult<Response> {
    let params = params_of(&state, &query(q)?)?;
    let etag = universe_etag(&params);
    let etag_value = HeaderValue::from_str(&etag).expect("hex etags are valid header values");
    if etag_matches(&headers, &etag) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value)]).into_response());
    }
    let body = state.universes.universe(&params).layout().to_json_bytes();
    Ok((
        [
            (header::ETAG, etag_value),
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
        ],
        body,
    )
        .into_response())
}

fn lookup(universe: &Universe, id: &str) -> AppResult<NodeRecord> {
    universe.node(id).cloned().ok_or_else(|| ApiError::unknown_node(id))
}

async fn get_node(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    q: Result<Query<UniverseQuery>, QueryRejection>,
) -> AppResult<Json<NodeResponse>> {
    let params = params_of(&state, &query(q)?)?;
    let universe = state.universes.universe(&params);
    let node = lookup(&universe, &id)?;
    let location = universe.locate(&id).expect("node exists");
    let neighbors = universe
        .neighbors(&id)
        .into_iter()
        .map(|(n, cost)| Neighbor {
            node_id: n.to_string(),
            cost,
        })
        .collect();
    Ok(Json(NodeResponse {
        node,
        location,
        neighbors,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct BriefQuery {
    plugin: Option<String>,
    fidelity: Option<String>,
    #[serde(default)]
    stream: bool,
    #[serde(default)]
    force_fresh: bool,
    session: Option<String>,
    world_seed: Option<u64>,
    density: Option<f64>,
    galaxies: Option<u32>,
    systems: Option<u32>,
}

/// Everything a synthesis needs, resolved and owned.
struct BriefJob {
    plugin: PluginSpec,
    node: NodeRecord,
    excerpt: PhysicsExcerpt,
    tier: FidelityTier,
    opts: SynthesisOptions,
}

async fn resolve_brief(state: &AppState, id: &str, q: &BriefQuery) -> AppResult<BriefJob> {
    let plugin = state.plugins.get(q.plugin.as_deref().unwrap_or(MISSION_BRIEF))?.clone();
    let tier = match &q.fidelity {
        None => state.config.default_fidelity,
        Some(f) => f
            .parse()
            .map_err(|_| ApiError::bad_request("MalformedQuery", format!("unknown fidelity {f:?}")))?,
    };
    // A session supplies both the universe and the physics excerpt the prompt sees.
    let physics = match q.session.as_deref().and_then(|s| state.sessions.get(s)) {
        Some(slot) => slot.lock().await.state.clone(),
        None => {
            let uq = UniverseQuery {
                world_seed: q.world_seed,
                density: q.density,
                galaxies: q.galaxies,
                systems: q.systems,
            };
            initial_state(&state.universes, params_of(state, &uq)?, "observer")
        }
    };
    let universe = state.universes.universe(&physics.universe_params);
    let node = lookup(&universe, id)?;
    Ok(BriefJob {
        plugin,
        node,
        excerpt: physics.excerpt(),
        tier,
        opts: SynthesisOptions {
            force_fresh: q.force_fresh,
        },
    })
}

async fn run_brief(state: &AppState, job: &BriefJob) -> BriefResponse {
    let s = state
        .imagination
        .synthesize(&job.plugin, &job.node, &job.excerpt, job.tier, job.opts)
        .await;
    BriefResponse {
        node_id: job.node.node_id.clone(),
        plugin: job.plugin.name.clone(),
        tier_used: s.tier_used,
        retries: s.retries,
        seeded_sampling: s.seeded_sampling,
        document: s.document,
    }
}

fn wants_stream(headers: &HeaderMap, q: &BriefQuery) -> bool {
    q.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains("text/event-stream"))
}

async fn get_brief(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    q: Result<Query<BriefQuery>, QueryRejection>,
) -> AppResult<Response> {
    let q = query(q)?;
    let job = resolve_brief(&state, &id, &q).await?;
    if wants_stream(&headers, &q) {
        return Ok(stream_brief(state, job).into_response());
    }
    let brief = run_brief(&state, &job).await;
    let tier = HeaderValue::from_static(brief.tier_used.as_str());
    Ok(([(TIER_HEADER, tier)], Json(brief)).into_response())
}

fn event(name: &str, payload: &impl serde::Serialize) -> Event {
    Event::default()
        .event(name)
        .data(serde_json::to_string(payload).expect("stream payloads serialize"))
}

/// `status` at once, then `chunk`s for each text field, then `done` with the full brief.
fn stream_brief(
    state: Arc<AppState>,
    job: BriefJob,
) -> Sse<impl futures::Stream<Item = Result<Event, Infallible>>> {
    let (tx, rx) = mpsc::unbounded();
    tokio::spawn(async move {
        let status = StreamStatus {
            state: "syncing".into(),
            node_id: job.node.node_id.clone(),
            plugin: job.plugin.name.clone(),
        };
        if tx.unbounded_send(Ok(event("status", &status))).is_err() {
            return;
        }
        let brief = run_brief(&state, &job).await;
        for field in &job.plugin.schema.fields {
            if !matches!(field.kind, FieldKind::Text) {
                continue;
            }
            let Some(text) = brief.document.values.get(&field.name).and_then(|v| v.as_str()) else {
                continue;
            };
            for delta in chunk_text(text, CHUNK_WIDTH) {
                let chunk = StreamChunk {
                    field: field.name.clone(),
                    delta,
                };
                if tx.unbounded_send(Ok(event("chunk", &chunk))).is_err() {
                    return;
                }
            }
        }
        let _ = tx.unbounded_send(Ok(event("done", &brief)));
    });
    Sse::new(rx).keep_alive(KeepAlive::default())
}

async fn post_action(
    State(state): State<Arc<AppState>>,
    Path(session_id): Path<String>,
    q: Result<Query<UniverseQuery>, QueryRejection>,
    body: Result<Json<ActionEvent>, JsonRejection>,
) -> AppResult<Json<ActionResponse>> {
    if !valid_session_id(&session_id) {
        return Err(ApiError::bad_request(
            "MalformedSession",
            "session ids are 1-64 characters of [A-Za-z0-9_-]",
        ));
    }
    let Json(action) = body.map_err(|e| ApiError::bad_request("MalformedAction", e.body_text()))?;
    // The query only matters when this action creates the session.
    let origin = params_of(&state, &query(q)?)?;
    let slot = state.sessions.get_or_create(&state.universes, &session_id, origin);
    let mut session = SessionStore::try_write(&slot).ok_or_else(|| ApiError::session_busy(&session_id))?;

    let next = apply_action_with(&state.universes, &session.state, &action)?;
    let line = SnapshotLine {
        session_id: session_id.clone(),
        origin: session.origin,
        tick: next.tick,
        action: action.clone(),
    };
    state
        .sessions
        .record(&line)
        .map_err(|e| ApiError::internal(format!("snapshot write failed: {e}")))?;
    session.state = next;

    // A scan produces its brief before the lock is released.
    let brief = if action.kind == ActionKind::Scan {
        let target = action
            .target
            .clone()
            .unwrap_or_else(|| session.state.voyager.location.clone());
        let universe = state.universes.universe(&session.state.universe_params);
        let job = BriefJob {
            plugin: state.plugins.get(MISSION_BRIEF)?.clone(),
            node: lookup(&universe, &target)?,
            excerpt: session.state.excerpt(),
            tier: state.config.default_fidelity,
            opts: SynthesisOptions::default(),
        };
        let b = run_brief(&state, &job).await;
        Some(BriefRef {
            href: format!("/api/node/{}/brief?plugin={}&session={}", b.node_id, b.plugin, session_id),
            node_id: b.node_id,
            plugin: b.plugin,
            tier_used: b.tier_used,
        })
    } else {
        None
    };

    let s = &session.state;
    Ok(Json(ActionResponse {
        tick: s.tick,
        universe_params: s.universe_params,
        voyager: s.voyager.clone(),
        brief,
    }))
}

async fn get_plugins(State(state): State<Arc<AppState>>) -> Json<Vec<wwm_core::plugins::PluginInfo>> {
    Json(state.plugins.infos())
}

async fn get_meta(State(state): State<Arc<AppState>>) -> Json<MetaResponse> {
    Json(MetaResponse {
        version: env!("CARGO_PKG_VERSION").to_string(),
        uptime_secs: state.started.elapsed().as_secs(),
        provider_configured: state.imagination.provider_configured(),
        cache_entries: state.imagination.cache_entries(),
        sessions: state.sessions.len(),
        tiers: state.imagination.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn etags_are_quoted_and_param_sensitive() {
        let a = GenerationParams::default();
        let b = GenerationParams {
            density: 1.5,
            ..a
        };
        let ea = universe_etag(&a);
        assert!(ea.starts_with('"') && ea.ends_with('"'));
        assert_eq!(ea, universe_etag(&a));
        assert_ne!(ea, universe_etag(&b));
    }

    #[test]
    fn if_none_match_lists() {
        let mut h = HeaderMap::new();
        h.insert(header::IF_NONE_MATCH, HeaderValue::from_static("\"x\", \"y\""));
        assert!(etag_matches(&h, "\"y\""));
        assert!(!etag_matches(&h, "\"z\""));
        h.insert(header::IF_NONE_MATCH, HeaderValue::from_static("*"));
        assert!(etag_matches(&h, "\"z\""));
    }
}
