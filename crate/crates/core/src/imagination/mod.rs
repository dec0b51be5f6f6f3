//! The stochastic layer: provider-backed synthesis behind a seed-keyed cache,
//! with deterministic templates as the floor.
//!
//! [`Imagination::synthesize`] always returns a schema-valid document. The
//! path it took is reported as a [`FidelityTier`]:
//!
//! * `medium`: served from the file cache,
//! * `high`: produced live by the provider, validated, then cached,
//! * `base`: rendered from the plugin's template.
//!
//! Cache is consulted before the provider unless the caller asks for fresh
//! content.

pub mod cache;
pub mod provider;
pub mod template;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::plugins::PluginSpec;
use crate::procgen::{NodeRecord, NodeSeed};
use crate::schema::{schema_to_prompt_fragment, validate_document, GeneratedDocument};
use crate::world::PhysicsExcerpt;

use cache::{CacheEntry, CacheKey, FileCache};
use provider::{validate_and_retry, HttpProvider, Provider, ProviderConfig, ProviderError, ProviderRequest};

pub const DEFAULT_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityTier {
    High,
    Medium,
    Base,
}

impl FidelityTier {
    pub fn as_str(self) -> &'static str {
        match self {
            FidelityTier::High => "high",
            FidelityTier::Medium => "medium",
            FidelityTier::Base => "base",
        }
    }
}

impl fmt::Display for FidelityTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FidelityTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(FidelityTier::High),
            "medium" => Ok(FidelityTier::Medium),
            "base" => Ok(FidelityTier::Base),
            other => Err(format!("unknown fidelity tier {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SynthesisOptions {
    /// Skip the cache read and go to the provider first. The result is still cached.
    pub force_fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Synthesis {
    pub document: GeneratedDocument,
    pub tier_used: FidelityTier,
    /// Provider retries spent on this document.
    pub retries: u32,
    /// True when permanence rests on the provider's sampling seed as well as the cache.
    pub seeded_sampling: bool,
}

#[derive(Debug, Default)]
struct Counters {
    high: AtomicU64,
    medium: AtomicU64,
    base: AtomicU64,
    provider_calls: AtomicU64,
    retries: AtomicU64,
    provider_failures: AtomicU64,
    rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierStats {
    pub high: u64,
    pub medium: u64,
    pub base: u64,
    pub provider_calls: u64,
    pub retries: u64,
    pub provider_failures: u64,
    pub rejected: u64,
}

/// Wraps a provider so every call is counted.
struct Counted<'a> {
    inner: &'a dyn Provider,
    calls: &'a AtomicU64,
}

impl Provider for Counted<'_> {
    fn complete<'b>(&'b self, request: &'b ProviderRequest) -> BoxFuture<'b, Result<String, ProviderError>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }

    fn seeds_sampling(&self) -> bool {
        self.inner.seeds_sampling()
    }
}

pub struct Imagination {
    provider: Option<Arc<dyn Provider>>,
    max_retries: u32,
    cache: Option<FileCache>,
    in_flight: Semaphore,
    key_locks: Mutex<HashMap<CacheKey, Arc<tokio::sync::Mutex<()>>>>,
    counters: Counters,
}

impl fmt::Debug for Imagination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Imagination")
            .field("provider", &self.provider.is_some())
            .field("max_retries", &self.max_retries)
            .field("cache", &self.cache.as_ref().map(|c| c.root().to_path_buf()))
            .finish()
    }
}

impl Default for Imagination {
    fn default() -> Self {
        Imagination::new()
    }
}

impl Imagination {
    /// No provider, no cache: everything renders at base fidelity.
    pub fn new() -> Self {
        Imagination {
            provider: None,
            max_retries: provider::DEFAULT_MAX_RETRIES,
            cache: None,
            in_flight: Semaphore::new(DEFAULT_IN_FLIGHT),
            key_locks: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn Provider>, max_retries: u32) -> Self {
        self.provider = Some(provider);
        self.max_retries = max_retries;
        self
    }

    /// Attaches an HTTP provider if `config` carries a key; otherwise a no-op.
    pub fn with_provider_config(self, config: ProviderConfig) -> Self {
        if !config.is_configured() {
            return self;
        }
        let retries = config.max_retries;
        self.with_provider(Arc::new(HttpProvider::new(config)), retries)
    }

    pub fn with_cache(mut self, cache: FileCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_in_flight(mut self, limit: usize) -> Self {
        self.in_flight = Semaphore::new(limit.max(1));
        self
    }

    pub fn provider_configured(&self) -> bool {
        self.provider.is_some()
    }

    pub fn cache(&self) -> Option<&FileCache> {
        self.cache.as_ref()
    }

    pub fn cache_entries(&self) -> usize {
        self.cache.as_ref().map_or(0, FileCache::count)
    }

    pub fn stats(&self) -> TierStats {
        let c = &self.counters;
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        TierStats {
            high: l(&c.high),
            medium: l(&c.medium),
            base: l(&c.base),
            provider_calls: l(&c.provider_calls),
            retries: l(&c.retries),
            provider_failures: l(&c.provider_failures),
            rejected: l(&c.rejected),
        }
    }

    fn key_lock(&self, key: &CacheKey) -> Arc<tokio::sync::Mutex<()>> {
        self.key_locks
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone()
    }

    fn record(&self, tier: FidelityTier) {
        let c = match tier {
            FidelityTier::High => &self.counters.high,
            FidelityTier::Medium => &self.counters.medium,
            FidelityTier::Base => &self.counters.base,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    /// Produce a document for `plugin` at `node`. Never fails: every path that
    /// cannot deliver falls through to the template.
    ///
    /// `requested` caps the tier: `base` renders the template only, `medium`
    /// allows the cache, `high` allows the cache and the provider.
    pub async fn synthesize(
        &self,
        plugin: &PluginSpec,
        node: &NodeRecord,
        excerpt: &PhysicsExcerpt,
        requested: FidelityTier,
        opts: SynthesisOptions,
    ) -> Synthesis {
        let seed = node.seed();
        let out = match requested {
            FidelityTier::Base => None,
            _ => self.try_enriched(plugin, node, excerpt, seed, requested, opts).await,
        };
        let out = out.unwrap_or_else(|| Synthesis {
            document: plugin.render_template(node, seed),
            tier_used: FidelityTier::Base,
            retries: 0,
            seeded_sampling: false,
        });
        self.record(out.tier_used);
        out
    }

    async fn try_enriched(
        &self,
        plugin: &PluginSpec,
        node: &NodeRecord,
        excerpt: &PhysicsExcerpt,
        seed: NodeSeed,
        requested: FidelityTier,
        opts: SynthesisOptions,
    ) -> Option<Synthesis> {
        let schema = &plugin.schema;
        let key = CacheKey::new(seed, &plugin.name, &schema.name, schema.version);
        // Single writer per key: a concurrent twin waits here and then hits the cache.
        let lock = self.key_lock(&key);
        let _guard = lock.lock().await;

        if !opts.force_fresh {
            if let Some(hit) = self.cache_lookup(&key, plugin) {
                return Some(hit);
            }
        }
        if requested != FidelityTier::High {
            return None;
        }
        let provider = self.provider.as_deref()?;

        let prompt = (plugin.prompt_builder)(node, excerpt);
        let fragment = schema_to_prompt_fragment(schema);
        let seeded = provider.seeds_sampling();
        let request = ProviderRequest {
            prompt,
            schema: fragment,
            seed: seeded.then_some(seed.value()),
        };
        let counted = Counted {
            inner: provider,
            calls: &self.counters.provider_calls,
        };

        let _permit = self.in_flight.acquire().await.ok()?;
        let raw = match counted.complete(&request).await {
            Ok(raw) => raw,
            Err(e) => {
                self.counters.provider_failures.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(plugin = %plugin.name, node = %node.node_id, error = %e, "provider call failed, degrading");
                return None;
            }
        };
        match validate_and_retry(&counted, raw, schema, &request, self.max_retries).await {
            Ok((document, retries)) => {
                self.counters.retries.fetch_add(u64::from(retries), Ordering::Relaxed);
                if let Some(cache) = &self.cache {
                    let entry = CacheEntry::new(key.clone(), document.clone(), seeded);
                    if let Err(e) = cache.put(&entry) {
                        tracing::warn!(key = %key, error = %e, "cache write failed");
                    }
                }
                Some(Synthesis {
                    document,
                    tier_used: FidelityTier::High,
                    retries,
                    seeded_sampling: seeded,
                })
            }
            Err(reject) => {
                self.counters
                    .retries
                    .fetch_add(u64::from(reject.attempts.saturating_sub(1)), Ordering::Relaxed);
                self.counters.rejected.fetch_add(1, Ordering::Relaxed);
                if reject.provider_error.is_some() {
                    self.counters.provider_failures.fetch_add(1, Ordering::Relaxed);
                }
                tracing::warn!(plugin = %plugin.name, node = %node.node_id, attempts = reject.attempts, "provider output rejected, degrading");
                None
            }
        }
    }

    fn cache_lookup(&self, key: &CacheKey, plugin: &PluginSpec) -> Option<Synthesis> {
        let cache = self.cache.as_ref()?;
        let entry = match cache.get(key) {
            Ok(Some(entry)) => entry,
            Ok(None) => return None,
            Err(e) => {
                tracing::warn!(key = %key, error = %e, "cache read failed, treating as miss");
                return None;
            }
        };
        if validate_document(&entry.document, &plugin.schema).is_err() {
            tracing::warn!(key = %key, "cached document no longer validates, ignoring");
            return None;
        }
        Some(Synthesis {
            document: entry.document,
            tier_used: FidelityTier::Medium,
            retries: 0,
            seeded_sampling: entry.seeded_sampling,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::provider::scripted::ScriptedProvider;
    use super::*;
    use crate::plugins::builtin_plugins;
    use crate::procgen::hash_coordinate;
    use crate::schema::validate_document;

    fn node(i: i32) -> NodeRecord {
        NodeRecord::from_seed(hash_coordinate(i, 1, 42))
    }

    fn excerpt() -> PhysicsExcerpt {
        PhysicsExcerpt::default()
    }

    fn valid_text(plugin: &PluginSpec, n: &NodeRecord) -> String {
        // A "model" answer: the template for a different seed, minus reserved keys.
        let doc = plugin.render_template(n, NodeSeed(n.seed().value() ^ 0xabc));
        serde_json::to_string(&doc.values).unwrap()
    }

    #[tokio::test]
    async fn no_provider_no_cache_is_base() {
        let engine = Imagination::new();
        let plugins = builtin_plugins();
        for p in &plugins {
            let n = node(3);
            let s = engine
                .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
                .await;
            assert_eq!(s.tier_used, FidelityTier::Base);
            assert_eq!(validate_document(&s.document, &p.schema), Ok(()));
        }
        assert_eq!(engine.stats().base, 2);
    }

    #[tokio::test]
    async fn live_then_cached() {
        let dir = tempfile::tempdir().unwrap();
        let plugins = builtin_plugins();
        let p = &plugins[0];
        let n = node(4);
        let provider = Arc::new(ScriptedProvider::always(valid_text(p, &n)));
        let engine = Imagination::new()
            .with_provider(provider.clone(), 2)
            .with_cache(FileCache::open(dir.path()).unwrap());

        let first = engine
            .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;
        assert_eq!(first.tier_used, FidelityTier::High);
        assert!(first.seeded_sampling);
        let second = engine
            .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;
        assert_eq!(second.tier_used, FidelityTier::Medium);
        assert_eq!(second.document.to_json_bytes(), first.document.to_json_bytes());
        assert_eq!(provider.calls(), 1);
        assert_eq!(engine.cache_entries(), 1);

        let fresh = engine
            .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions { force_fresh: true })
            .await;
        assert_eq!(fresh.tier_used, FidelityTier::High);
        assert_eq!(provider.calls(), 2);
    }

    #[tokio::test]
    async fn medium_request_never_calls_provider() {
        let plugins = builtin_plugins();
        let p = &plugins[1];
        let n = node(5);
        let provider = Arc::new(ScriptedProvider::always(valid_text(p, &n)));
        let engine = Imagination::new().with_provider(provider.clone(), 2);
        let s = engine
            .synthesize(p, &n, &excerpt(), FidelityTier::Medium, SynthesisOptions::default())
            .await;
        assert_eq!(s.tier_used, FidelityTier::Base);
        assert_eq!(provider.calls(), 0);
    }

    #[tokio::test]
    async fn provider_errors_degrade_to_base() {
        let plugins = builtin_plugins();
        let p = &plugins[0];
        let provider = Arc::new(ScriptedProvider::new(vec![Err(ProviderError::Timeout)]));
        let engine = Imagination::new().with_provider(provider, 2);
        let s = engine
            .synthesize(p, &node(6), &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;
        assert_eq!(s.tier_used, FidelityTier::Base);
        assert_eq!(engine.stats().provider_failures, 1);
    }

    #[tokio::test]
    async fn invalid_then_valid_is_high_with_one_retry() {
        let plugins = builtin_plugins();
        let p = &plugins[0];
        let n = node(7);
        let provider = Arc::new(ScriptedProvider::new(vec![
            Ok(r#"{"terrain":"x"}"#.into()),
            Ok(valid_text(p, &n)),
        ]));
        let engine = Imagination::new().with_provider(provider.clone(), 2);
        let s = engine
            .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;
        assert_eq!(s.tier_used, FidelityTier::High);
        assert_eq!(s.retries, 1);
        assert_eq!(engine.stats().retries, 1);
        assert_eq!(provider.calls(), 2);
    }

    #[tokio::test]
    async fn stale_schema_version_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let plugins = builtin_plugins();
        let p = &plugins[0];
        let n = node(8);
        let provider = Arc::new(ScriptedProvider::always(valid_text(p, &n)));
        let engine = Imagination::new()
            .with_provider(provider.clone(), 2)
            .with_cache(FileCache::open(dir.path()).unwrap());
        engine
            .synthesize(p, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;

        let mut bumped = p.clone();
        bumped.schema.version += 1;
        let s = engine
            .synthesize(&bumped, &n, &excerpt(), FidelityTier::High, SynthesisOptions::default())
            .await;
        assert_eq!(s.document.schema_version, bumped.schema.version);
        assert_eq!(provider.calls(), 2);
    }

    #[tokio::test]
    async fn concurrent_same_key_calls_provider_once() {
        let dir = tempfile::tempdir().unwrap();
        let plugins = builtin_plugins();
        let p = plugins[0].clone();
        let n = node(9);
        let provider = Arc::new(ScriptedProvider::always(valid_text(&p, &n)));
        let engine = Arc::new(
            Imagination::new()
                .with_provider(provider.clone(), 2)
                .with_cache(FileCache::open(dir.path()).unwrap()),
        );
        let mut handles = Vec::new();
        for _ in 0..8 {
            let (engine, p, n) = (engine.clone(), p.clone(), n.clone());
            handles.push(tokio::spawn(async move {
                engine
                    .synthesize(&p, &n, &PhysicsExcerpt::default(), FidelityTier::High, SynthesisOptions::default())
                    .await
            }));
        }
        let mut docs = Vec::new();
        for h in handles {
            docs.push(h.await.unwrap().document.to_json_bytes());
        }
        assert!(docs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(provider.calls(), 1);
    }

    #[test]
    fn tier_parsing() {
        for t in [FidelityTier::High, FidelityTier::Medium, FidelityTier::Base] {
            assert_eq!(t.as_str().parse::<FidelityTier>().unwrap(), t);
        }
        assert!("ultra".parse::<FidelityTier>().is_err());
    }
}
