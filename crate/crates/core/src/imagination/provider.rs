//! Vendor-neutral language-model provider contract.
//!
//! One POST per call carrying `{prompt, schema, seed?}`; the provider answers
//! `{text}`. Adapters for real vendors sit behind this contract.

use std::fmt;
use std::time::Duration;

use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::procgen::NodeSeed;
use crate::schema::{validate_document, GeneratedDocument, SchemaDef, Violation};

pub const DEFAULT_KEY_ENV: &str = "WWM_PROVIDER_KEY";
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;

/// A credential that refuses to print itself.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub api_key: Option<Secret>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub sampling_seed_supported: bool,
}

impl ProviderConfig {
    pub fn new(endpoint_url: impl Into<String>, api_key: Option<Secret>) -> Self {
        ProviderConfig {
            endpoint_url: endpoint_url.into(),
            api_key,
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
            max_retries: DEFAULT_MAX_RETRIES,
            sampling_seed_supported: true,
        }
    }

    /// Reads the key from `key_env`. Empty values count as absent.
    pub fn from_env(endpoint_url: impl Into<String>, key_env: &str) -> Self {
        let key = std::env::var(key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .map(Secret::new);
        ProviderConfig::new(endpoint_url, key)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn is_configured(&self) -> bool {
        self.api_key.is_some() && !self.endpoint_url.is_empty() && !self.timeout.is_zero()
    }
}

/// Request body on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub prompt: String,
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Response body on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider did not answer within the timeout")]
    Timeout,
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("provider answered with status {0}")]
    NonSuccessStatus(u16),
    #[error("provider answered with an empty body")]
    EmptyBody,
    #[error("no provider key configured")]
    MissingKey,
}

/// Anything that can answer a provider request.
pub trait Provider: Send + Sync {
    fn complete<'a>(&'a self, request: &'a ProviderRequest) -> BoxFuture<'a, Result<String, ProviderError>>;

    /// Whether requests carry the node seed as the sampling seed.
    fn seeds_sampling(&self) -> bool;
}

/// Builds the wire request for one call.
pub fn build_request(config: &ProviderConfig, prompt: &str, schema_fragment: &str, seed: NodeSeed) -> ProviderRequest {
    ProviderRequest {
        prompt: prompt.to_string(),
        schema: schema_fragment.to_string(),
        seed: config.sampling_seed_supported.then_some(seed.value()),
    }
}

/// A single HTTP round trip to the configured endpoint.
pub async fn call_provider(
    client: &reqwest::Client,
    config: &ProviderConfig,
    prompt: &str,
    schema_fragment: &str,
    seed: NodeSeed,
) -> Result<String, ProviderError> {
    send(client, config, &build_request(config, prompt, schema_fragment, seed)).await
}

async fn send(
    client: &reqwest::Client,
    config: &ProviderConfig,
    request: &ProviderRequest,
) -> Result<String, ProviderError> {
    let key = config.api_key.as_ref().ok_or(ProviderError::MissingKey)?;
    let round_trip = async {
        let response = client
            .post(&config.endpoint_url)
            .bearer_auth(key.expose())
            .json(request)
            .send()
            .await
            .map_err(map_reqwest)?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::NonSuccessStatus(status.as_u16()));
        }
        let body = response.bytes().await.map_err(map_reqwest)?;
        if body.iter().all(u8::is_ascii_whitespace) {
            return Err(ProviderError::EmptyBody);
        }
        let parsed: ProviderResponse = serde_json::from_slice(&body)
            .map_err(|e| ProviderError::TransportError(format!("malformed response body: {e}")))?;
        if parsed.text.trim().is_empty() {
            return Err(ProviderError::EmptyBody);
        }
        Ok(parsed.text)
    };
    tokio::time::timeout(config.timeout, round_trip)
        .await
        .unwrap_or(Err(ProviderError::Timeout))
}

fn map_reqwest(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        // Strip the URL; it is config, not an error detail worth echoing.
        ProviderError::TransportError(e.without_url().to_string())
    }
}

/// [`Provider`] over HTTP.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Self {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("http client builds with static settings");
        HttpProvider { config, client }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }
}

impl Provider for HttpProvider {
    fn complete<'a>(&'a self, request: &'a ProviderRequest) -> BoxFuture<'a, Result<String, ProviderError>> {
        Box::pin(send(&self.client, &self.config, request))
    }

    fn seeds_sampling(&self) -> bool {
        self.config.sampling_seed_supported
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("provider output rejected after {attempts} attempts")]
pub struct RejectAfterRetries {
    pub attempts: u32,
    pub violations: Vec<Violation>,
    pub provider_error: Option<ProviderError>,
}

/// Appends accumulated validation feedback to the original prompt.
pub fn retry_prompt(prompt: &str, feedback: &[Violation]) -> String {
    let mut out = String::from(prompt);
    out.push_str("\n\nYour previous answer was rejected by the schema validator:\n");
    for v in feedback {
        out.push_str("- ");
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out.push_str("Answer again with a corrected JSON object.");
    out
}

/// Parses `raw`; on rejection re-asks the provider up to `max_retries` times,
/// feeding back every violation seen so far. Returns the first valid document
/// and the number of retries it took.
pub async fn validate_and_retry(
    provider: &dyn Provider,
    raw: String,
    def: &SchemaDef,
    request: &ProviderRequest,
    max_retries: u32,
) -> Result<(GeneratedDocument, u32), RejectAfterRetries> {
    let mut feedback: Vec<Violation> = Vec::new();
    let mut raw = raw;
    for attempt in 0..=max_retries {
        let outcome = GeneratedDocument::from_model_text(&raw, def)
            .and_then(|doc| validate_document(&doc, def).map(|()| doc));
        match outcome {
            Ok(doc) => return Ok((doc, attempt)),
            Err(errs) => feedback.extend(errs),
        }
        if attempt == max_retries {
            break;
        }
        let retry = ProviderRequest {
            prompt: retry_prompt(&request.prompt, &feedback),
            ..request.clone()
        };
        raw = match provider.complete(&retry).await {
            Ok(text) => text,
            Err(e) => {
                return Err(RejectAfterRetries {
                    attempts: attempt + 2,
                    violations: feedback,
                    provider_error: Some(e),
                })
            }
        };
    }
    Err(RejectAfterRetries {
        attempts: max_retries + 1,
        violations: feedback,
        provider_error: None,
    })
}
