//! Async client for the world service's `/api` routes.

mod sse;

use futures::{Stream, StreamExt};
use reqwest::{StatusCode, Url};
use serde::de::DeserializeOwned;
use thiserror::Error;
use wwm_core::plugins::PluginInfo;
use wwm_core::wire::{
    ActionResponse, BriefResponse, ErrorBody, MetaResponse, NodeResponse, StreamChunk, StreamStatus, UniverseQuery,
};
use wwm_core::{ActionEvent, FidelityTier};

pub use sse::{SseEvent, SseParser};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status}: {} ({})", body.message, body.code)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("bad base url: {0}")]
    Url(String),
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("event stream ended before `done`")]
    Truncated,
}

impl ClientError {
    /// The service's error code, if the failure came from the service.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// Raw universe body plus its entity tag.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseFetch {
    pub etag: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BriefRequest {
    pub plugin: Option<String>,
    pub fidelity: Option<FidelityTier>,
    pub force_fresh: bool,
    pub session: Option<String>,
    pub universe: UniverseQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BriefEvent {
    Status(StreamStatus),
    Chunk(StreamChunk),
    Done(BriefResponse),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

fn universe_pairs(q: &UniverseQuery) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(v) = q.world_seed {
        out.push(("world_seed", v.to_string()));
    }
    if let Some(v) = q.density {
        out.push(("density", v.to_string()));
    }
    if let Some(v) = q.galaxies {
        out.push(("galaxies", v.to_string()));
    }
    if let Some(v) = q.systems {
        out.push(("systems", v.to_string()));
    }
    out
}

fn brief_pairs(req: &BriefRequest) -> Vec<(&'static str, String)> {
    let mut out = universe_pairs(&req.universe);
    if let Some(p) = &req.plugin {
        out.push(("plugin", p.clone()));
    }
    if let Some(f) = req.fidelity {
        out.push(("fidelity", f.as_str().to_string()));
    }
    if req.force_fresh {
        out.push(("force_fresh", "true".into()));
    }
    if let Some(s) = &req.session {
        out.push(("session", s.clone()));
    }
    out
}

async fn fail(resp: reqwest::Response) -> ClientError {
    let status = resp.status();
    let body = match resp.bytes().await {
        Ok(b) => serde_json::from_slice(&b).unwrap_or_else(|_| ErrorBody {
            code: status.as_str().to_string(),
            message: String::from_utf8_lossy(&b).into_owned(),
            details: serde_json::Value::Null,
        }),
        Err(e) => return e.into(),
    };
    ClientError::Api { status, body }
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
    if !resp.status().is_success() {
        return Err(fail(resp).await);
    }
    let bytes = resp.bytes().await?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

fn to_event(e: SseEvent) -> Result<Option<BriefEvent>> {
    let bad = |err: serde_json::Error| ClientError::Decode(format!("{} event: {err}", e.event));
    Ok(Some(match e.event.as_str() {
        "status" => BriefEvent::Status(serde_json::from_str(&e.data).map_err(bad)?),
        "chunk" => BriefEvent::Chunk(serde_json::from_str(&e.data).map_err(bad)?),
        "done" => BriefEvent::Done(serde_json::from_str(&e.data).map_err(bad)?),
        _ => return Ok(None),
    }))
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self> {
        let base = Url::parse(base_url.trim_end_matches('/')).map_err(|e| ClientError::Url(e.to_string()))?;
        Ok(Client {
            base,
            http: reqwest::Client::new(),
        })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str, pairs: &[(&str, String)]) -> Result<Url> {
        let joined = format!("{}{}", self.base.as_str().trim_end_matches('/'), path);
        Url::parse_with_params(&joined, pairs).map_err(|e| ClientError::Url(e.to_string()))
    }

    pub async fn universe(&self, q: &UniverseQuery) -> Result<UniverseFetch> {
        self.universe_if_changed(q, None)
            .await
            .map(|f| f.expect("no entity tag was offered"))
    }

    /// `None` when `etag` still matches.
    pub async fn universe_if_changed(&self, q: &UniverseQuery, etag: Option<&str>) -> Result<Option<UniverseFetch>> {
        let mut req = self.http.get(self.url("/api/universe", &universe_pairs(q))?);
        if let Some(tag) = etag {
            req = req.header(reqwest::header::IF_NONE_MATCH, tag);
        }
        let resp = req.send().await?;
        if resp.status() == StatusCode::NOT_MODIFIED {
            return Ok(None);
        }
        if !resp.status().is_success() {
            return Err(fail(resp).await);
        }
        let etag = resp
            .headers()
            .get(reqwest::header::ETAG)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        Ok(Some(UniverseFetch {
            etag,
            body: resp.bytes().await?.to_vec(),
        }))
    }

    pub async fn node(&self, id: &str, q: &UniverseQuery) -> Result<NodeResponse> {
        let url = self.url(&format!("/api/node/{id}"), &universe_pairs(q))?;
        decode(self.http.get(url).send().await?).await
    }

    pub async fn brief(&self, id: &str, req: &BriefRequest) -> Result<BriefResponse> {
        let url = self.url(&format!("/api/node/{id}/brief"), &brief_pairs(req))?;
        decode(self.http.get(url).send().await?).await
    }

    /// Streams `status`, `chunk`s and a final `done`; errors if the stream stops early.
    pub async fn brief_stream(
        &self,
        id: &str,
        req: &BriefRequest,
    ) -> Result<impl Stream<Item = Result<BriefEvent>> + Unpin> {
        let mut pairs = brief_pairs(req);
        pairs.push(("stream", "true".into()));
        let resp = self
            .http
            .get(self.url(&format!("/api/node/{id}/brief"), &pairs)?)
            .header(reqwest::header::ACCEPT, "text/event-stream")
            .send()
            .await?;
        if !resp.status().is_success() {
            return Err(fail(resp).await);
        }
        let state = (resp.bytes_stream(), SseParser::new(), Vec::<SseEvent>::new().into_iter(), false);
        Ok(Box::pin(futures::stream::unfold(state, |(mut body, mut parser, mut ready, mut done)| async move {
            loop {
                if done {
                    return None;
                }
                if let Some(ev) = ready.next() {
                    match to_event(ev) {
                        Ok(None) => continue,
                        Ok(Some(ev)) => {
                            done = matches!(ev, BriefEvent::Done(_));
                            return Some((Ok(ev), (body, parser, ready, done)));
                        }
                        Err(e) => return Some((Err(e), (body, parser, ready, true))),
                    }
                }
                match body.next().await {
                    Some(Ok(bytes)) => ready = parser.push(&bytes).into_iter(),
                    Some(Err(e)) => return Some((Err(e.into()), (body, parser, ready, true))),
                    None => return Some((Err(ClientError::Truncated), (body, parser, ready, true))),
                }
            }
        })))
    }

    /// Applies `action`. `origin` only matters when the action creates the session.
    pub async fn action(
        &self,
        session: &str,
        action: &ActionEvent,
        origin: Option<&UniverseQuery>,
    ) -> Result<ActionResponse> {
        let pairs = origin.map(universe_pairs).unwrap_or_default();
        let url = self.url(&format!("/api/voyager/{session}/action"), &pairs)?;
        decode(self.http.post(url).json(action).send().await?).await
    }

    pub async fn plugins(&self) -> Result<Vec<PluginInfo>> {
        decode(self.http.get(self.url("/api/plugins", &[])?).send().await?).await
    }

    pub async fn meta(&self) -> Result<MetaResponse> {
        decode(self.http.get(self.url("/api/meta", &[])?).send().await?).await
    }
}
