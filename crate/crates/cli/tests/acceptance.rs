//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::collections::{HashMap, HashSet, VecDeque};
use std::future::Future;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use wwm_client::{BriefRequest, Client, ClientError};
use wwm_core::imagination::provider::{ProviderConfig, Secret, DEFAULT_MAX_RETRIES};
use wwm_core::plugins::{builtin_plugins, MISSION_BRIEF};
use wwm_core::procgen::{hash_coordinate, mix64, NodeRecord, NodeSeed};
use wwm_core::schema::{validate_document, FieldKind, GeneratedDocument, SchemaDef, ViolationClass};
use wwm_core::wire::{ActionResponse, UniverseQuery};
use wwm_core::world::{apply_action_with, check_invariants, initial_state, UniverseCache, UniverseSource};
use wwm_core::{ActionEvent, ActionKind, FidelityTier, GenerationParams, PhysicsState, Universe};
use wwm_service::stub::{self, Step, StubHandle};
use wwm_service::{AppConfig, AppState, ServerHandle};

type Outcome = Result<String, String>;

// Independent splitmix64 finalizer, written from the published algorithm.
fn oracle_mix(z: u64) -> u64 {
    let z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn oracle_hash(x: i32, y: i32, seed: u64) -> u64 {
    let mut packed = [0u8; 8];
    packed[..4].copy_from_slice(&x.to_be_bytes());
    packed[4..].copy_from_slice(&y.to_be_bytes());
    oracle_mix(seed ^ u64::from_be_bytes(packed))
}

fn object_permanence() -> Outcome {
    let start = Instant::now();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_wwm"))
            .args(["verify", "1000", "--world-seed", "20261017"])
            .output()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    let elapsed = start.elapsed();
    let report = String::from_utf8_lossy(&a.stdout);
    if !a.status.success() || !b.status.success() {
        return Err(format!("verify exited {:?}/{:?}: {report}", a.status.code(), b.status.code()));
    }
    if a.stdout != b.stdout {
        return Err("reports differ between invocations".into());
    }
    if !report.contains("mismatches: 0") || !report.contains("documents: 2000") {
        return Err(format!("unexpected report: {report}"));
    }
    if elapsed >= Duration::from_secs(30) {
        return Err(format!("took {elapsed:.2?}"));
    }
    Ok(format!("2 runs x 1000 coordinates, identical reports, {elapsed:.2?}"))
}

fn hash_bit_exactness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut bad = Vec::new();
    let pinned: [(u64, u64); 3] = [
        (0, 0xe220_a839_7b1d_cdaf),
        (1, 0x910a_2dec_8902_5cc1),
        (u64::MAX, 0xe4d9_7177_1b65_2c20),
    ];
    for (input, want) in pinned {
        if mix64(input) != want || oracle_mix(input) != want {
            bad.push(format!("pinned mix64({input:#x})"));
        }
    }
    for (x, y) in [(0, 0), (1, 1), (i32::MAX, i32::MIN), (-1, -1)] {
        for s in [0, 1, u64::MAX] {
            if hash_coordinate(x, y, s).value() != oracle_hash(x, y, s) {
                bad.push(format!("hash_coordinate({x}, {y}, {s:#x})"));
            }
        }
    }
    for _ in 0..10_000 {
        let z: u64 = rng.gen();
        if mix64(z) != oracle_mix(z) {
            bad.push(format!("mix64({z:#x})"));
        }
        let (x, y, s): (i32, i32, u64) = (rng.gen(), rng.gen(), rng.gen());
        if hash_coordinate(x, y, s).value() != oracle_hash(x, y, s) {
            bad.push(format!("hash_coordinate({x}, {y}, {s:#x})"));
        }
    }
    if bad.is_empty() {
        Ok("10000 random + pinned edge inputs, 0 mismatches".into())
    } else {
        Err(format!("{} mismatches, first {}", bad.len(), bad[0]))
    }
}

fn random_action(rng: &mut StdRng, cache: &UniverseCache, s: &PhysicsState) -> ActionEvent {
    let u = cache.universe(&s.universe_params);
    match rng.gen_range(0..100) {
        0..=49 => {
            let n = u.neighbors(&s.voyager.location);
            ActionEvent::travel(n[rng.gen_range(0..n.len())].0)
        }
        50..=64 => ActionEvent::travel(u.node_ids()[rng.gen_range(0..u.node_ids().len())].clone()),
        65..=69 => ActionEvent::travel(format!("{:016x}", rng.gen::<u64>())),
        70..=84 => ActionEvent::scan(None),
        85..=88 => ActionEvent::scan(Some(format!("{:016x}", rng.gen::<u64>()))),
        89..=90 => ActionEvent::reseed(),
        91..=96 => ActionEvent::set_density(rng.gen_range(0.0..3.5)),
        _ => ActionEvent {
            kind: ActionKind::Travel,
            target: None,
            value: None,
        },
    }
}

fn physics_fuzz() -> Outcome {
    let start = Instant::now();
    let cache = UniverseCache::new(64);
    let (mut accepted, mut rejected) = (0u64, 0u64);
    for session in 0..50u64 {
        let mut rng = StdRng::seed_from_u64(1000 + session);
        let params = GenerationParams {
            world_seed: rng.gen(),
            density: rng.gen_range(0.2..=3.0),
            ..Default::default()
        };
        let mut state = initial_state(&cache, params, format!("fuzz-{session}"));
        for step in 0..10_000 {
            let action = random_action(&mut rng, &cache, &state);
            let before = serde_json::to_vec(&state).unwrap();
            match apply_action_with(&cache, &state, &action) {
                Ok(next) => {
                    accepted += 1;
                    let u = cache.universe(&next.universe_params);
                    check_invariants(&next, &u)
                        .map_err(|v| format!("session {session} step {step}: {v:?} after {action:?}"))?;
                    if action.kind == ActionKind::Travel {
                        let cost = u
                            .lane_cost(&state.voyager.location, &next.voyager.location)
                            .ok_or_else(|| format!("session {session} step {step}: travel without a lane"))?;
                        if next.voyager.fuel + cost != state.voyager.fuel {
                            return Err(format!("session {session} step {step}: fuel accounting broke"));
                        }
                    }
                    state = next;
                }
                Err(_) => {
                    rejected += 1;
                    if serde_json::to_vec(&state).unwrap() != before {
                        return Err(format!("session {session} step {step}: rejected action changed state"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("took {elapsed:.2?}"));
    }
    Ok(format!("500000 actions ({accepted} accepted, {rejected} rejected), 0 violations, {elapsed:.2?}"))
}

async fn start(config: AppConfig) -> Result<ServerHandle, String> {
    let state = AppState::new(config).map_err(|e| e.to_string())?;
    wwm_service::spawn("127.0.0.1:0".parse().unwrap(), Arc::new(state))
        .await
        .map_err(|e| e.to_string())
}

async fn start_stub(script: Vec<Step>) -> Result<StubHandle, String> {
    stub::spawn("127.0.0.1:0".parse().unwrap(), script)
        .await
        .map_err(|e| e.to_string())
}

fn stub_provider(stub: &StubHandle) -> ProviderConfig {
    ProviderConfig::new(stub.url(), Some(Secret::new("acceptance-key")))
}

async fn graceful_degradation() -> Outcome {
    let server = start(AppConfig::default()).await?;
    let client = Client::new(&server.url()).map_err(|e| e.to_string())?;
    let universe = Universe::generate(&GenerationParams::default());
    let plugin = builtin_plugins().into_iter().find(|p| p.name == MISSION_BRIEF).unwrap();
    let mut slowest = Duration::ZERO;
    for (i, id) in universe.node_ids().iter().cycle().take(100).enumerate() {
        let t = Instant::now();
        let b = client
            .brief(id, &BriefRequest::default())
            .await
            .map_err(|e| format!("request {i}: {e}"))?;
        let dt = t.elapsed();
        slowest = slowest.max(dt);
        if b.tier_used != FidelityTier::Base {
            return Err(format!("request {i}: tier {}", b.tier_used));
        }
        validate_document(&b.document, &plugin.schema).map_err(|v| format!("request {i}: {v:?}"))?;
        if dt >= Duration::from_millis(50) {
            return Err(format!("request {i} took {dt:.2?}"));
        }
    }
    Ok(format!("100/100 base-tier, schema-valid, slowest {slowest:.2?}"))
}

const CLASSES: [ViolationClass; 7] = [
    ViolationClass::MissingField,
    ViolationClass::WrongKind,
    ViolationClass::EnumViolation,
    ViolationClass::RangeViolation,
    ViolationClass::UnknownField,
    ViolationClass::ListTooLong,
    ViolationClass::SchemaMismatch,
];

fn mutate(doc: &GeneratedDocument, def: &SchemaDef, class: ViolationClass, rng: &mut StdRng) -> Option<GeneratedDocument> {
    let mut d = doc.clone();
    let pick = |rng: &mut StdRng, pred: &dyn Fn(&FieldKind) -> bool| {
        let names: Vec<&str> = def.fields.iter().filter(|f| pred(&f.kind)).map(|f| f.name.as_str()).collect();
        (!names.is_empty()).then(|| names[rng.gen_range(0..names.len())].to_string())
    };
    match class {
        ViolationClass::MissingField => {
            let f = pick(rng, &|_| true)?;
            d.values.remove(&f);
        }
        ViolationClass::WrongKind => {
            let f = pick(rng, &|_| true)?;
            let wrong = match def.field(&f)?.kind {
                FieldKind::Text | FieldKind::Enum { .. } => json!(rng.gen::<u8>()),
                _ => json!({ "nested": true }),
            };
            d.values.insert(f, wrong);
        }
        ViolationClass::EnumViolation => {
            let f = pick(rng, &|k| matches!(k, FieldKind::Enum { .. }))?;
            d.values.insert(f, json!(format!("level-{}", rng.gen::<u16>())));
        }
        ViolationClass::RangeViolation => {
            let f = pick(rng, &|k| matches!(k, FieldKind::Integer { .. } | FieldKind::Real { .. }))?;
            let v = match def.field(&f)?.kind {
                FieldKind::Integer { min, max } => json!(if rng.gen() { max + 1 } else { min - 1 }),
                FieldKind::Real { min, max } => json!(if rng.gen() { max + 0.5 } else { min - 0.5 }),
                _ => unreachable!(),
            };
            d.values.insert(f, v);
        }
        ViolationClass::UnknownField => {
            d.values.insert(format!("extra_{}", rng.gen::<u16>()), json!("surplus"));
        }
        ViolationClass::ListTooLong => {
            let f = pick(rng, &|k| matches!(k, FieldKind::List { .. }))?;
            let FieldKind::List { max_len, .. } = def.field(&f)?.kind else {
                unreachable!()
            };
            d.values.insert(f, Value::Array(vec![json!("more"); max_len + 1 + rng.gen_range(0..3)]));
        }
        ViolationClass::SchemaMismatch => {
            if rng.gen() {
                d.schema_version += 1 + rng.gen_range(0..5);
            } else {
                d.schema_name = format!("{}-other", d.schema_name);
            }
        }
    }
    Some(d)
}

fn schema_gate() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x9a7e);
    let plugins = builtin_plugins();
    let stub = stub::StubState::new(vec![]);
    let (mut invalid, mut valid) = (0usize, 0usize);
    let mut base = 0u64;
    while invalid < 200 {
        for p in &plugins {
            let node = NodeRecord::from_seed(hash_coordinate(base as i32, 7, 11));
            let doc = p.render_template(&node, node.seed());
            for &class in &CLASSES {
                if invalid == 200 {
                    break;
                }
                let bad = mutate(&doc, &p.schema, class, &mut rng)
                    .ok_or_else(|| format!("{} has no field for {class:?}", p.name))?;
                match validate_document(&bad, &p.schema) {
                    Ok(()) => return Err(format!("{} {class:?} mutation accepted", p.name)),
                    Err(v) if !v.iter().any(|x| x.class() == class) => {
                        return Err(format!("{} {class:?} mutation reported {v:?}", p.name))
                    }
                    Err(_) => invalid += 1,
                }
            }
        }
        base += 1;
    }
    // Valid corpus: template documents and stub (provider-shaped) documents.
    for i in 0..100u64 {
        for p in &plugins {
            let seed = NodeSeed(rng.gen());
            let doc = if i % 2 == 0 {
                p.render_template(&NodeRecord::from_seed(seed), seed)
            } else {
                let req = wwm_core::imagination::provider::ProviderRequest {
                    prompt: format!("prompt {i}"),
                    schema: wwm_core::schema::schema_to_prompt_fragment(&p.schema),
                    seed: Some(seed.value()),
                };
                let text = stub.valid_document(&req).unwrap().to_json_string();
                GeneratedDocument::from_model_text(&text, &p.schema).map_err(|v| format!("{v:?}"))?
            };
            validate_document(&doc, &p.schema).map_err(|v| format!("valid {} rejected: {v:?}", p.name))?;
            valid += 1;
        }
    }
    Ok(format!("{invalid}/200 invalid rejected with expected class, {valid}/200 valid accepted"))
}

async fn cache_economy() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stub = start_stub(vec![]).await?;
    let config = AppConfig {
        provider: Some(stub_provider(&stub)),
        cache_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let id = Universe::generate(&GenerationParams::default()).spawn().to_string();
    let server = start(config.clone()).await?;
    let client = Client::new(&server.url()).map_err(|e| e.to_string())?;
    let a = client.brief(&id, &BriefRequest::default()).await.map_err(|e| e.to_string())?;
    let b = client.brief(&id, &BriefRequest::default()).await.map_err(|e| e.to_string())?;
    if stub.calls() != 1 || a.document != b.document || b.tier_used != FidelityTier::Medium {
        return Err(format!("after two requests: {} calls, tiers {}/{}", stub.calls(), a.tier_used, b.tier_used));
    }

    let mut bumped = builtin_plugins();
    bumped.iter_mut().find(|p| p.name == MISSION_BRIEF).unwrap().schema.version += 1;
    let state = AppState::with_plugins(config, bumped).map_err(|e| e.to_string())?;
    let v2 = wwm_service::spawn("127.0.0.1:0".parse().unwrap(), Arc::new(state))
        .await
        .map_err(|e| e.to_string())?;
    let c = Client::new(&v2.url()).map_err(|e| e.to_string())?
        .brief(&id, &BriefRequest::default())
        .await
        .map_err(|e| e.to_string())?;
    if stub.calls() != 2 || c.tier_used != FidelityTier::High || c.document.schema_version != 2 {
        return Err(format!("after version bump: {} calls, tier {}", stub.calls(), c.tier_used));
    }
    Ok("2 identical requests -> 1 provider call; version bump -> 2".into())
}

async fn retry_contract() -> Outcome {
    let id = Universe::generate(&GenerationParams::default()).spawn().to_string();
    let brief = |script: Vec<Step>| async {
        let stub = start_stub(script).await?;
        let server = start(AppConfig {
            provider: Some(stub_provider(&stub)),
            ..Default::default()
        })
        .await?;
        let b = Client::new(&server.url())
            .map_err(|e| e.to_string())?
            .brief(&id, &BriefRequest::default())
            .await
            .map_err(|e| e.to_string())?;
        Ok::<_, String>((b, stub.calls()))
    };
    let (ok, calls) = brief(vec![Step::Invalid, Step::Valid]).await?;
    if ok.tier_used != FidelityTier::High || ok.retries != 1 || calls != 2 {
        return Err(format!("[invalid, valid] gave {} with {} retries", ok.tier_used, ok.retries));
    }
    let attempts = 1 + DEFAULT_MAX_RETRIES as usize;
    let (exhausted, calls) = brief(vec![Step::Invalid; attempts]).await?;
    if exhausted.tier_used != FidelityTier::Base || calls != attempts as u64 {
        return Err(format!("{attempts} invalid gave {} after {calls} calls", exhausted.tier_used));
    }
    Ok(format!("[invalid, valid] -> high with 1 retry; {attempts} x invalid -> base"))
}

fn connectivity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xc0ee);
    let mut galaxies = 0;
    for case in 0..100 {
        let params = GenerationParams {
            world_seed: rng.gen(),
            density: rng.gen_range(0.2..=3.0),
            galaxy_count: rng.gen_range(1..=8),
            systems_per_galaxy: rng.gen_range(4..=32),
        };
        let layout = wwm_core::procgen::generate_universe(&params);
        for g in &layout.galaxies {
            galaxies += 1;
            let ids: Vec<&str> = g.systems.iter().flat_map(|s| s.nodes.iter().map(|n| n.node_id.as_str())).collect();
            let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
            for lane in g.systems.iter().flat_map(|s| &s.lanes) {
                adj.entry(&lane.from).or_default().push(&lane.to);
                adj.entry(&lane.to).or_default().push(&lane.from);
            }
            let mut seen: HashSet<&str> = HashSet::from([ids[0]]);
            let mut queue = VecDeque::from([ids[0]]);
            while let Some(n) = queue.pop_front() {
                for &m in adj.get(n).into_iter().flatten() {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            if seen.len() != ids.len() {
                return Err(format!("case {case} galaxy {}: {}/{} reachable", g.index, seen.len(), ids.len()));
            }
        }
    }
    Ok(format!("100 parameter sets, {galaxies} galaxies, all connected"))
}

async fn linearizability() -> Outcome {
    // A provider round trip during each scan widens the critical section.
    let stub = start_stub(vec![]).await?;
    let server = start(AppConfig {
        provider: Some(stub_provider(&stub)),
        ..Default::default()
    })
    .await?;
    let origin = GenerationParams {
        world_seed: 4242,
        ..Default::default()
    };
    let session = "shared";
    let mut tasks = Vec::new();
    for client_no in 0..8u64 {
        let url = server.url();
        tasks.push(tokio::spawn(async move {
            let client = Client::new(&url).unwrap();
            let q = UniverseQuery::from_params(&origin);
            let cache = UniverseCache::new(4);
            let mut rng = StdRng::seed_from_u64(client_no);
            let mut view = initial_state(&cache, origin, session);
            let mut committed = Vec::new();
            let (mut conflicts, mut domain, mut other) = (0, 0, Vec::new());
            for _ in 0..100 {
                let action = match rng.gen_range(0..10) {
                    0..=4 => {
                        let u = cache.universe(&view.universe_params);
                        let n = u.neighbors(&view.voyager.location);
                        ActionEvent::travel(n[rng.gen_range(0..n.len())].0)
                    }
                    5..=7 => ActionEvent::scan(None),
                    8 => ActionEvent::set_density(rng.gen_range(0.5..2.0)),
                    _ => ActionEvent::reseed(),
                };
                match client.action(session, &action, Some(&q)).await {
                    Ok(r) => {
                        view = PhysicsState {
                            universe_params: r.universe_params,
                            voyager: r.voyager.clone(),
                            tick: r.tick,
                        };
                        committed.push((action, r));
                    }
                    Err(ClientError::Api { status, .. }) if status.as_u16() == 409 => conflicts += 1,
                    Err(ClientError::Api { status, .. }) if status.as_u16() == 422 => domain += 1,
                    Err(e) => other.push(e.to_string()),
                }
            }
            (committed, conflicts, domain, other)
        }));
    }
    let mut log: Vec<(ActionEvent, ActionResponse)> = Vec::new();
    let (mut conflicts, mut domain) = (0, 0);
    for t in tasks {
        let (c, k, d, other) = t.await.map_err(|e| e.to_string())?;
        if let Some(e) = other.first() {
            return Err(format!("unexpected response: {e}"));
        }
        log.extend(c);
        conflicts += k;
        domain += d;
    }
    log.sort_by_key(|(_, r)| r.tick);
    for (i, (_, r)) in log.iter().enumerate() {
        if r.tick != i as u64 + 1 {
            return Err(format!("ticks not a contiguous total order at position {i}: {}", r.tick));
        }
    }
    if conflicts == 0 {
        return Err("no concurrent writer was ever refused".into());
    }
    let cache = UniverseCache::new(8);
    let mut replay = initial_state(&cache, origin, session);
    for (i, (action, r)) in log.iter().enumerate() {
        replay = apply_action_with(&cache, &replay, action).map_err(|e| format!("replay step {i}: {e}"))?;
        if replay.voyager != r.voyager || replay.universe_params != r.universe_params {
            return Err(format!("replay diverges at tick {} after {action:?}", r.tick));
        }
        check_invariants(&replay, &cache.universe(&replay.universe_params)).map_err(|v| format!("{v:?}"))?;
    }
    Ok(format!(
        "{} committed in one total order, {conflicts} x 409, {domain} x 422, replay matches",
        log.len()
    ))
}

fn report(name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("[PASS] {name}: {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("[FAIL] {name}: {detail}");
        }
    }
}

fn block<F: Future<Output = Outcome>>(rt: &tokio::runtime::Runtime, f: F) -> Outcome {
    rt.block_on(f)
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut failures = 0;
    report("object permanence", object_permanence(), &mut failures);
    report("hash bit-exactness", hash_bit_exactness(), &mut failures);
    report("physics safety fuzz", physics_fuzz(), &mut failures);
    report("graceful degradation", block(&rt, graceful_degradation()), &mut failures);
    report("schema gate", schema_gate(), &mut failures);
    report("cache economy", block(&rt, cache_economy()), &mut failures);
    report("retry contract", block(&rt, retry_contract()), &mut failures);
    report("connectivity", connectivity(), &mut failures);
    report("session linearizability", block(&rt, linearizability()), &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
