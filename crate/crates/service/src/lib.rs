//! HTTP/JSON surface over the world engine, plus an in-process stub of the
//! language-model provider for offline high-fidelity runs.

pub mod error;
pub mod routes;
pub mod sessions;
pub mod stub;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use wwm_core::imagination::cache::{CacheError, FileCache};
use wwm_core::imagination::provider::ProviderConfig;
use wwm_core::imagination::DEFAULT_IN_FLIGHT;
use wwm_core::plugins::{builtin_plugins, PluginError};
use wwm_core::world::UniverseCache;
use wwm_core::{FidelityTier, GenerationParams, Imagination, PluginRegistry, PluginSpec, SchemaRegistry};

pub use error::ApiError;
pub use routes::router;
pub use sessions::{SessionStore, SnapshotError};

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub defaults: GenerationParams,
    pub cache_dir: Option<PathBuf>,
    pub provider: Option<ProviderConfig>,
    pub default_fidelity: FidelityTier,
    pub in_flight: usize,
    pub snapshot_path: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            defaults: GenerationParams::default(),
            cache_dir: None,
            provider: None,
            default_fidelity: FidelityTier::High,
            in_flight: DEFAULT_IN_FLIGHT,
            snapshot_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("default parameters: {0}")]
    Params(#[from] wwm_core::procgen::ParamError),
    #[error("cache directory: {0}")]
    Cache(#[from] CacheError),
    #[error("plugins: {0}")]
    Plugin(#[from] PluginError),
    #[error("schema: {0}")]
    Schema(#[from] wwm_core::schema::SchemaError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Everything a request handler can reach.
#[derive(Debug)]
pub struct AppState {
    pub config: AppConfig,
    pub universes: UniverseCache,
    pub imagination: Imagination,
    pub schemas: SchemaRegistry,
    pub plugins: PluginRegistry,
    pub sessions: SessionStore,
    pub started: Instant,
}

impl AppState {
    pub fn new(config: AppConfig) -> Result<Self, StartupError> {
        Self::with_plugins(config, builtin_plugins())
    }

    /// Like [`AppState::new`] with a custom plugin set, e.g. a bumped schema version.
    pub fn with_plugins(config: AppConfig, plugins: Vec<PluginSpec>) -> Result<Self, StartupError> {
        config.defaults.validate()?;
        let schemas = SchemaRegistry::new();
        let mut registry = PluginRegistry::new();
        for p in plugins {
            if schemas.get(&p.schema.name, p.schema.version).is_none() {
                schemas.register(p.schema.clone())?;
            }
            registry.register(&schemas, p)?;
        }

        let mut imagination = Imagination::new().with_in_flight(config.in_flight);
        if let Some(dir) = &config.cache_dir {
            imagination = imagination.with_cache(FileCache::open(dir)?);
        }
        if let Some(provider) = &config.provider {
            imagination = imagination.with_provider_config(provider.clone());
        }

        let universes = UniverseCache::default();
        let sessions = match &config.snapshot_path {
            Some(path) => SessionStore::with_snapshot(&universes, path)?,
            None => SessionStore::new(),
        };
        Ok(AppState {
            config,
            universes,
            imagination,
            schemas,
            plugins: registry,
            sessions,
            started: Instant::now(),
        })
    }
}

/// Serves `state` on an already-bound listener until the task is dropped.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// A server running on a background task; stopped when dropped.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    task: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr, state: Arc<AppState>) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(serve(listener, state));
    Ok(ServerHandle { addr, task })
}
