//! A stand-in for the language-model provider that speaks the same wire
//! contract. Unscripted, it answers every request with a schema-valid
//! document derived from the request seed. Scripted, it replays a fixed list
//! of behaviours in order and then falls back to unscripted answers.

use std::collections::VecDeque;
use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use wwm_core::imagination::provider::{ProviderRequest, ProviderResponse};
use wwm_core::plugins::builtin_plugins;
use wwm_core::procgen::{mix64, NodeRecord, NodeSeed};
use wwm_core::schema::{parse_fragment_header, GeneratedDocument};
use wwm_core::PluginSpec;

/// Keeps stub prose distinct from the base-tier template for the same node.
const STUB_SALT: u64 = 0x5354_5542_5052_4f56;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    /// A schema-valid document.
    Valid,
    /// Well-formed JSON that breaks the schema.
    Invalid,
    /// Wait, then answer with a valid document.
    Delay { ms: u64 },
    /// Answer with this HTTP status and no document.
    Status { code: u16 },
    /// 200 with an empty `text`.
    Empty,
    /// 200 with `text` verbatim.
    Raw { text: String },
}

pub fn load_script(path: &Path) -> io::Result<Vec<Step>> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[derive(Debug)]
pub struct StubState {
    script: Mutex<VecDeque<Step>>,
    calls: AtomicU64,
    plugins: Vec<PluginSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubStats {
    pub calls: u64,
    pub remaining_steps: usize,
}

impl StubState {
    pub fn new(script: Vec<Step>) -> Self {
        StubState {
            script: Mutex::new(script.into()),
            calls: AtomicU64::new(0),
            plugins: builtin_plugins(),
        }
    }

    pub fn stats(&self) -> StubStats {
        StubStats {
            calls: self.calls.load(Ordering::SeqCst),
            remaining_steps: self.script.lock().unwrap().len(),
        }
    }

    /// The document an unscripted stub returns for `request`, or None for an unknown schema.
    pub fn valid_document(&self, request: &ProviderRequest) -> Option<GeneratedDocument> {
        let (name, version) = parse_fragment_header(&request.schema)?;
        let mut plugin = self.plugins.iter().find(|p| p.schema.name == name)?.clone();
        plugin.schema.version = version;
        let seed = request.seed.unwrap_or_else(|| {
            let digest = Sha256::digest(request.prompt.as_bytes());
            u64::from_le_bytes(digest[..8].try_into().unwrap())
        });
        let node = NodeRecord::from_seed(NodeSeed(seed));
        Some(plugin.render_template(&node, NodeSeed(mix64(seed ^ STUB_SALT))))
    }
}

/// Breaks a valid document in two ways at once: a missing required field and an unknown one.
fn spoil(mut doc: GeneratedDocument) -> GeneratedDocument {
    if let Some(first) = doc.values.keys().next().cloned() {
        doc.values.remove(&first);
    }
    doc.values.insert("mass".into(), json!(9));
    doc
}

pub fn router(state: Arc<StubState>) -> Router {
    Router::new()
        .route("/", post(generate))
        .route("/generate", post(generate))
        .route("/stats", get(stats))
        .with_state(state)
}

fn text(body: String) -> Response {
    Json(ProviderResponse { text: body }).into_response()
}

async fn generate(State(state): State<Arc<StubState>>, headers: HeaderMap, body: axum::body::Bytes) -> Response {
    let authorized = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("Bearer ") && v.len() > 7);
    if !authorized {
        return (StatusCode::UNAUTHORIZED, "missing bearer key").into_response();
    }
    let request: ProviderRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    state.calls.fetch_add(1, Ordering::SeqCst);
    let step = state.script.lock().unwrap().pop_front().unwrap_or(Step::Valid);
    tracing::debug!(?step, "stub provider answering");

    let valid = || state.valid_document(&request);
    let answer = match step {
        Step::Valid => valid(),
        Step::Invalid => valid().map(spoil),
        Step::Delay { ms } => {
            tokio::time::sleep(Duration::from_millis(ms)).await;
            valid()
        }
        Step::Status { code } => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, "scripted failure").into_response();
        }
        Step::Empty => return text(String::new()),
        Step::Raw { text: raw } => return text(raw),
    };
    match answer {
        Some(doc) => text(doc.to_json_string()),
        None => (StatusCode::BAD_REQUEST, "unknown schema in request").into_response(),
    }
}

async fn stats(State(state): State<Arc<StubState>>) -> Json<StubStats> {
    Json(state.stats())
}

/// A stub running on a background task; stopped when dropped.
#[derive(Debug)]
pub struct StubHandle {
    pub addr: SocketAddr,
    pub state: Arc<StubState>,
    task: JoinHandle<io::Result<()>>,
}

impl StubHandle {
    pub fn url(&self) -> String {
        format!("http://{}/generate", self.addr)
    }

    pub fn calls(&self) -> u64 {
        self.state.stats().calls
    }
}

impl Drop for StubHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn serve(listener: TcpListener, state: Arc<StubState>) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn spawn(addr: SocketAddr, script: Vec<Step>) -> io::Result<StubHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let state = Arc::new(StubState::new(script));
    let task = tokio::spawn(serve(listener, state.clone()));
    Ok(StubHandle { addr, state, task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use wwm_core::plugins::{field_log, mission_brief};
    use wwm_core::schema::{schema_to_prompt_fragment, validate_document};

    fn request(plugin: &PluginSpec, seed: Option<u64>) -> ProviderRequest {
        ProviderRequest {
            prompt: "describe node".into(),
            schema: schema_to_prompt_fragment(&plugin.schema),
            seed,
        }
    }

    #[test]
    fn unscripted_documents_validate() {
        let stub = StubState::new(vec![]);
        for plugin in [mission_brief(), field_log()] {
            for seed in [Some(0), Some(77), None] {
                let doc = stub.valid_document(&request(&plugin, seed)).unwrap();
                validate_document(&doc, &plugin.schema).unwrap();
            }
        }
    }

    #[test]
    fn stub_prose_differs_from_the_template() {
        let stub = StubState::new(vec![]);
        let plugin = mission_brief();
        let node = NodeRecord::from_seed(NodeSeed(9));
        let base = plugin.render_template(&node, node.seed());
        assert_ne!(stub.valid_document(&request(&plugin, Some(9))).unwrap(), base);
    }

    #[test]
    fn follows_the_requested_version() {
        let stub = StubState::new(vec![]);
        let mut plugin = mission_brief();
        plugin.schema.version = 2;
        let doc = stub.valid_document(&request(&plugin, Some(1))).unwrap();
        assert_eq!(doc.schema_version, 2);
        validate_document(&doc, &plugin.schema).unwrap();
    }

    #[test]
    fn spoiled_documents_fail() {
        let stub = StubState::new(vec![]);
        let plugin = field_log();
        let doc = spoil(stub.valid_document(&request(&plugin, Some(3))).unwrap());
        assert!(validate_document(&doc, &plugin.schema).is_err());
    }

    #[test]
    fn script_json_shape() {
        let steps: Vec<Step> = serde_json::from_str(
            r#"[{"kind":"invalid"},{"kind":"delay","ms":5},{"kind":"status","code":503},{"kind":"empty"},{"kind":"raw","text":"x"},{"kind":"valid"}]"#,
        )
        .unwrap();
        assert_eq!(steps.len(), 6);
        assert_eq!(steps[2], Step::Status { code: 503 });
    }
}
