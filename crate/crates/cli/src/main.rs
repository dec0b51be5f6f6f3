mod verify;

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tokio::net::TcpListener;
use wwm_client::Client;
use wwm_core::imagination::cache::FileCache;
use wwm_core::imagination::provider::{ProviderConfig, DEFAULT_KEY_ENV, DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT_MS};
use wwm_core::imagination::DEFAULT_IN_FLIGHT;
use wwm_core::wire::UniverseQuery;
use wwm_core::{FidelityTier, GenerationParams, Universe};
use wwm_service::{AppConfig, AppState};

#[derive(Debug, Parser)]
#[command(name = "wwm", version, about = "Procedural galaxy world: service, generator and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a universe layout to a file, byte-identical to GET /api/universe.
    Gen(GenArgs),
    /// Rebuild node records and base documents twice and compare them.
    Verify(VerifyArgs),
    /// Inspect or empty a document cache directory.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Run a local stand-in for the language-model provider.
    StubProvider(StubArgs),
}

#[derive(Debug, Args)]
struct UniverseArgs {
    #[arg(long, env = "WWM_WORLD_SEED", default_value_t = 0)]
    world_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long, default_value_t = GenerationParams::default().galaxy_count)]
    galaxies: u32,
    #[arg(long, default_value_t = GenerationParams::default().systems_per_galaxy)]
    systems: u32,
}

impl UniverseArgs {
    fn params(&self) -> GenerationParams {
        GenerationParams {
            world_seed: self.world_seed,
            density: self.density,
            galaxy_count: self.galaxies,
            systems_per_galaxy: self.systems,
        }
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "WWM_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[command(flatten)]
    universe: UniverseArgs,
    /// Directory for cached high-fidelity documents.
    #[arg(long, env = "WWM_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Provider endpoint; without it (or without a key) every brief is template-based.
    #[arg(long, env = "WWM_PROVIDER_URL")]
    provider_url: Option<String>,
    /// Name of the environment variable holding the provider key.
    #[arg(long, default_value = DEFAULT_KEY_ENV)]
    key_env: String,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: u32,
    /// Do not send the node seed as the provider's sampling seed.
    #[arg(long)]
    no_sampling_seed: bool,
    /// Tier used when a request does not name one: high, medium or base.
    #[arg(long, default_value = "high")]
    fidelity: FidelityTier,
    /// Maximum concurrent provider calls.
    #[arg(long, default_value_t = DEFAULT_IN_FLIGHT)]
    in_flight: usize,
    /// Append committed actions here and replay them on start.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    universe: UniverseArgs,
    /// Output file; `-` writes to stdout.
    #[arg(long)]
    out: PathBuf,
    /// Fetch from a running service instead of generating locally.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Number of random coordinates.
    #[arg(value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    world_seed: u64,
    /// mix64 vector file; defaults to the bundled one.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    /// One line per entry: key, schema, tier, age.
    List {
        #[arg(long, env = "WWM_CACHE_DIR")]
        dir: PathBuf,
    },
    /// Delete every entry.
    Clear {
        #[arg(long, env = "WWM_CACHE_DIR")]
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct StubArgs {
    #[arg(long, default_value_t = 8090)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// JSON list of steps to replay, e.g. [{"kind":"invalid"},{"kind":"valid"}].
    #[arg(long)]
    script: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().context("starting async runtime")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve(args) => runtime()?.block_on(serve(args)).map(|_| ExitCode::SUCCESS),
        Command::Gen(args) => gen(args).map(|_| ExitCode::SUCCESS),
        Command::Verify(args) => verify_cmd(args),
        Command::Cache { action } => cache(action).map(|_| ExitCode::SUCCESS),
        Command::StubProvider(args) => runtime()?.block_on(stub_provider(args)).map(|_| ExitCode::SUCCESS),
    }
}

async fn serve(args: ServeArgs) -> Result<()> {
    let provider = args.provider_url.as_ref().map(|url| {
        let mut p = ProviderConfig::from_env(url.clone(), &args.key_env)
            .with_timeout(Duration::from_millis(args.timeout_ms))
            .with_max_retries(args.max_retries);
        p.sampling_seed_supported = !args.no_sampling_seed;
        p
    });
    let config = AppConfig {
        defaults: args.universe.params(),
        cache_dir: args.cache_dir.clone(),
        provider,
        default_fidelity: args.fidelity,
        in_flight: args.in_flight,
        snapshot_path: args.snapshot.clone(),
    };
    let state = Arc::new(AppState::new(config).context("configuring service")?);
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(
        addr = %listener.local_addr()?,
        provider_configured = state.imagination.provider_configured(),
        cache_dir = ?args.cache_dir,
        cache_entries = state.imagination.cache_entries(),
        sessions = state.sessions.len(),
        "service listening"
    );
    wwm_service::serve(listener, state).await.context("serving")
}

fn write_out(out: &Path, bytes: &[u8]) -> Result<()> {
    if out == Path::new("-") {
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(bytes)?;
        return stdout.flush().map_err(Into::into);
    }
    std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))
}

fn gen(args: GenArgs) -> Result<()> {
    let params = args.universe.params();
    params.validate()?;
    let bytes = match &args.server {
        None => Universe::generate(&params).layout().to_json_bytes(),
        Some(url) => {
            let client = Client::new(url)?;
            let q = UniverseQuery::from_params(&params);
            runtime()?.block_on(client.universe(&q))?.body
        }
    };
    write_out(&args.out, &bytes)
}

fn verify_cmd(args: VerifyArgs) -> Result<ExitCode> {
    let vectors = match &args.vectors {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => wwm_core::MIX64_VECTORS.to_string(),
    };
    let report = verify::run(args.n as usize, args.world_seed, &vectors);
    print!("{}", report.render());
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cache(action: CacheAction) -> Result<()> {
    match action {
        CacheAction::List { dir } => {
            if !dir.is_dir() {
                bail!("cache directory {} does not exist", dir.display());
            }
            let cache = FileCache::open(&dir)?;
            for e in cache.list()? {
                println!(
                    "{}\t{} v{}\t{}\t{}s",
                    e.key,
                    e.key.schema_name,
                    e.key.schema_version,
                    e.tier,
                    e.age_secs()
                );
            }
        }
        CacheAction::Clear { dir } => {
            let n = if dir.is_dir() { FileCache::open(&dir)?.clear()? } else { 0 };
            println!("cleared {n} entries");
        }
    }
    Ok(())
}

async fn stub_provider(args: StubArgs) -> Result<()> {
    let script = match &args.script {
        Some(p) => wwm_service::stub::load_script(p).with_context(|| format!("reading script {}", p.display()))?,
        None => Vec::new(),
    };
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, steps = script.len(), "stub provider listening");
    let state = Arc::new(wwm_service::stub::StubState::new(script));
    wwm_service::stub::serve(listener, state).await.context("serving")
}
