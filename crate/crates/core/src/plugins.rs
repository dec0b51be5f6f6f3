//! Agent plugins: stateless pipelines from (seed, node metadata) to one kind
//! of schema-bound document.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagination::template::{FieldTemplate, Template};
use crate::imagination::{FidelityTier, Imagination, Synthesis, SynthesisOptions};
use crate::procgen::{NodeRecord, NodeSeed};
use crate::schema::{FieldKind, FieldSpec, GeneratedDocument, SchemaDef, SchemaRegistry};
use crate::world::{PhysicsExcerpt, PhysicsState};

pub const MISSION_BRIEF: &str = "mission-brief";
pub const FIELD_LOG: &str = "field-log";

pub type PromptBuilder = fn(&NodeRecord, &PhysicsExcerpt) -> String;

#[derive(Debug, Clone)]
pub struct PluginSpec {
    pub name: String,
    pub schema: SchemaDef,
    pub prompt_builder: PromptBuilder,
    pub template: Template,
}

impl PluginSpec {
    pub fn render_template(&self, node: &NodeRecord, seed: NodeSeed) -> GeneratedDocument {
        self.template.render(&self.schema, node, seed)
    }

    pub fn prompt(&self, node: &NodeRecord, excerpt: &PhysicsExcerpt) -> String {
        (self.prompt_builder)(node, excerpt)
    }
}

/// Public view of a plugin, as listed by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginInfo {
    pub name: String,
    pub schema: SchemaDef,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PluginError {
    #[error("unknown plugin {0}")]
    UnknownPlugin(String),
    #[error("plugin {0} is already registered")]
    Duplicate(String),
    #[error("schema {name} v{version} must be registered before the plugin")]
    SchemaNotRegistered { name: String, version: u32 },
    #[error("schema {name} v{version} differs from the registered definition")]
    SchemaConflict { name: String, version: u32 },
}

/// Immutable-after-registration plugin table.
#[derive(Debug, Default)]
pub struct PluginRegistry {
    plugins: BTreeMap<String, PluginSpec>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the schemas and both reference plugins.
    pub fn with_builtins(schemas: &SchemaRegistry) -> Self {
        let mut reg = PluginRegistry::new();
        for p in builtin_plugins() {
            schemas
                .register(p.schema.clone())
                .expect("builtin schemas are well formed and registered once");
            reg.register(schemas, p).expect("builtin plugin names are unique");
        }
        reg
    }

    pub fn register(&mut self, schemas: &SchemaRegistry, spec: PluginSpec) -> Result<(), PluginError> {
        let (name, version) = (spec.schema.name.clone(), spec.schema.version);
        match schemas.get(&name, version) {
            None => return Err(PluginError::SchemaNotRegistered { name, version }),
            Some(def) if *def != spec.schema => return Err(PluginError::SchemaConflict { name, version }),
            Some(_) => {}
        }
        if self.plugins.contains_key(&spec.name) {
            return Err(PluginError::Duplicate(spec.name));
        }
        self.plugins.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&PluginSpec, PluginError> {
        self.plugins
            .get(name)
            .ok_or_else(|| PluginError::UnknownPlugin(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PluginSpec> {
        self.plugins.values()
    }

    pub fn infos(&self) -> Vec<PluginInfo> {
        self.iter()
            .map(|p| PluginInfo {
                name: p.name.clone(),
                schema: p.schema.clone(),
            })
            .collect()
    }

    /// Runs the named plugin through the imagination engine.
    pub async fn run_plugin(
        &self,
        engine: &Imagination,
        name: &str,
        node: &NodeRecord,
        physics: &PhysicsState,
        tier: FidelityTier,
        opts: SynthesisOptions,
    ) -> Result<Synthesis, PluginError> {
        let spec = self.get(name)?;
        Ok(engine
            .synthesize(spec, node, &physics.excerpt(), tier, opts)
            .await)
    }
}

fn risk_kind() -> FieldKind {
    FieldKind::enumeration(["low", "medium", "high"])
}

pub fn mission_brief_schema() -> SchemaDef {
    SchemaDef::new(
        MISSION_BRIEF,
        1,
        vec![
            FieldSpec::required("terrain", FieldKind::Text),
            FieldSpec::required("sky", FieldKind::Text),
            FieldSpec::required("signal", FieldKind::Text),
            FieldSpec::required("hazards", FieldKind::list(FieldKind::Text, 4)),
            FieldSpec::required("mission_hook", FieldKind::Text),
            FieldSpec::required("risk", risk_kind()),
            FieldSpec::required("signal_strength", FieldKind::Integer { min: 0, max: 100 }),
        ],
    )
}

pub fn field_log_schema() -> SchemaDef {
    SchemaDef::new(
        FIELD_LOG,
        1,
        vec![
            FieldSpec::required("log_title", FieldKind::Text),
            FieldSpec::required("body", FieldKind::Text),
            FieldSpec::required("risk_note", FieldKind::Text),
            FieldSpec::required("risk", risk_kind()),
            FieldSpec::required("stardate", FieldKind::Real { min: 3000.0, max: 3999.9 }),
            FieldSpec::required("keywords", FieldKind::list(FieldKind::Text, 3)),
        ],
    )
}

fn node_context(node: &NodeRecord, excerpt: &PhysicsExcerpt, out: &mut String) {
    let _ = writeln!(out, "Node: {} (id {})", node.display_name, node.node_id);
    let _ = writeln!(out, "Sector: {}", node.sector);
    let _ = writeln!(out, "Node type: {}", node.node_type);
    let _ = writeln!(out, "Risk profile: {}", node.risk);
    let _ = writeln!(out, "Resources index: {}/100", node.resources);
    if !excerpt.recent_route.is_empty() {
        let _ = writeln!(out, "Voyager arrived via: {}", excerpt.recent_route.join(" -> "));
    }
    let _ = writeln!(out, "Voyager fuel: {}", excerpt.fuel);
}

fn mission_brief_prompt(node: &NodeRecord, excerpt: &PhysicsExcerpt) -> String {
    let mut out = String::from("Write a mission brief for a star-atlas node. Describe terrain, sky, signal and up to four hazards, then a one-sentence mission hook.\n");
    node_context(node, excerpt, &mut out);
    let _ = writeln!(
        out,
        "The `risk` field must be \"{}\". Stay consistent with the node type.",
        node.risk
    );
    out
}

fn field_log_prompt(node: &NodeRecord, excerpt: &PhysicsExcerpt) -> String {
    let mut out = String::from("Write a surveyor's field log for a star-atlas node, with a title, a short body describing terrain, sky, signals and hazards, and a risk note.\n");
    node_context(node, excerpt, &mut out);
    let _ = writeln!(out, "The `risk` field must be \"{}\".", node.risk);
    out
}

// Filler pools shared by both plugins.
const MINERAL: &[&str] = &[
    "stormglass", "basalt", "obsidian", "salt", "quartz", "iron", "sulfur", "cobalt", "ice",
    "chalk", "jade", "copper", "slag", "bone-white silica", "rust", "tar",
];
const LANDFORM: &[&str] = &[
    "dunes", "mesas", "terraces", "canyons", "ridgelines", "flats", "sinkholes", "spires",
    "craters", "shelves", "fjords", "badlands", "plateaus", "reefs", "caldera rims", "scarps",
];
const TEXTURE: &[&str] = &[
    "fractured", "glassy", "wind-scoured", "terraced", "pitted", "shimmering", "ash-choked",
    "rain-slick", "frost-bitten", "sun-bleached", "overgrown", "cratered", "rippled", "honeycombed",
    "scorched", "crumbling",
];
const COLOR: &[&str] = &[
    "violet", "amber", "teal", "crimson", "ochre", "silver", "indigo", "jade", "copper", "pearl",
    "rose", "cobalt", "saffron", "slate", "emerald", "ivory",
];
const SKY_THING: &[&str] = &[
    "twin moons", "a ringed giant", "aurora curtains", "a shattered moon", "slow comets",
    "ion storms", "a dying sun", "drifting ash", "a binary dawn", "meteor rain", "static clouds",
    "a nebula veil", "orbital wreckage", "a tidal-locked glare", "pale halos", "lightning sheets",
];
const WEATHER: &[&str] = &[
    "acid drizzle", "glass hail", "dust squalls", "fog banks", "ember winds", "sleet", "heat shimmer",
    "pressure surges", "spore rain", "magnetic gusts", "ice fog", "salt storms", "ash fall",
    "thermal plumes", "static rain", "sand walls",
];
const SIGNAL_KIND: &[&str] = &[
    "a looping distress beacon", "a prime-number pulse", "broken navigation chatter",
    "a choir of harmonics", "encrypted burst traffic", "an automated toll hail",
    "a ghost transponder", "whale-song static", "a countdown carrier", "a mining claim ping",
    "fragmented colony radio", "a lighthouse tone", "a military IFF squawk", "machine babble",
    "a lullaby on loop", "dead-air pings",
];
const SIGNAL_SOURCE: &[&str] = &[
    "the northern pole", "a buried relay", "the ring plane", "a derelict hauler",
    "somewhere underground", "the upper atmosphere", "an abandoned dock", "the far side",
    "a crashed probe", "the equatorial trench", "a drifting buoy", "a sealed vault",
    "the storm wall", "an orbital mirror", "the old spaceport", "a moving source",
];
const HAZARD: &[&str] = &[
    "crystalline shards", "radiation pockets", "unstable ground", "toxic spores", "scavenger drones",
    "gravity shear", "corrosive mist", "pirate pickets", "sinking sand", "electromagnetic storms",
    "feral automatons", "superheated vents", "sensor blackouts", "micrometeor showers",
    "collapsing tunnels", "hostile fauna",
];
const HAZARD_EFFECT: &[&str] = &[
    "shred unshielded hulls", "scramble navigation", "eat through boot seals", "drain power cells",
    "ground shuttles for days", "blind long-range scanners", "force detours", "spike coolant loads",
    "jam comms", "strip paint to bare metal", "corrupt cargo manifests", "stall landing gear",
    "trigger hull alarms", "warp instrument readings", "choke air filters", "rattle the reactor",
];
const FACTION: &[&str] = &[
    "the Cartographers' Guild", "a salvage syndicate", "the Lantern Compact", "local prospectors",
    "a rogue AI caretaker", "the Halo Fleet", "an exiled monastery", "freight unionists",
    "the survey authority", "smuggler crews", "a research collective", "the toll wardens",
    "an old colonial council", "drift nomads", "the relay keepers", "a mercenary company",
];
const OBJECTIVE: &[&str] = &[
    "recover a lost survey drone", "map the signal source", "escort a fuel tender",
    "retrieve a sealed data core", "repair the beacon array", "extract a stranded crew",
    "catalogue the mineral seams", "shadow a smuggler convoy", "plant a navigation buoy",
    "negotiate landing rights", "sample the atmosphere", "trace a missing shipment",
    "disable a rogue transmitter", "chart a safe approach corridor", "deliver medical supplies",
    "photograph the ruins",
];
const URGENCY: &[&str] = &[
    "before the next storm front", "within two local days", "before rival crews arrive",
    "while the window is open", "before the beacon dies", "quietly", "at any cost",
    "before the tide turns", "under radio silence", "before the orbit decays", "on a thin budget",
    "before sunrise", "ahead of the toll wardens", "without waking the drones", "on the next pass",
    "before the claim expires",
];
const ADVICE: &[&str] = &[
    "keep shields forward", "land only at dusk", "double the filter stock", "run with lights off",
    "trust the old charts", "log every contact", "carry spare coolant", "stay in the lanes",
    "keep a relay in orbit", "move in short hops", "watch the pressure gauges", "avoid the lowlands",
    "pay the tolls", "rotate scanner crews", "keep the engines warm", "file a flight plan",
];
const MOOD: &[&str] = &[
    "uneasy", "quiet", "promising", "haunted", "busy", "strange", "tense", "serene", "grim",
    "electric", "lonely", "restless", "hopeful", "eerie", "hostile", "sleepy",
];
const KEYWORD: &[&str] = &[
    "survey", "salvage", "anomaly", "relay", "ruins", "storm", "ore", "signal", "derelict",
    "colony", "toll", "drift", "beacon", "wreck", "harvest", "quarantine",
];

const BRIEF_SLOTS: &[(&str, &[&str])] = &[
    ("mineral", MINERAL),
    ("landform", LANDFORM),
    ("texture", TEXTURE),
    ("color", COLOR),
    ("skything", SKY_THING),
    ("weather", WEATHER),
    ("signalkind", SIGNAL_KIND),
    ("source", SIGNAL_SOURCE),
    ("hazard", HAZARD),
    ("effect", HAZARD_EFFECT),
    ("faction", FACTION),
    ("objective", OBJECTIVE),
    ("urgency", URGENCY),
];

const TERRAIN: &[&str] = &[
    "A {mineral} biome of {texture} {landform} stretching to the horizon.",
    "{texture} {landform} cut through fields of {mineral}.",
    "The surface of {name} is {texture} {mineral} broken by {landform}.",
    "Ridges of {color} {mineral} rise above {texture} {landform}.",
    "Mostly {landform}, {texture} and veined with {mineral}.",
    "A {type} world of {mineral} {landform} under a {texture} crust.",
    "{color} {mineral} plains give way to {texture} {landform}.",
    "Landing zones sit between {texture} {landform} and seams of {mineral}.",
];
const SKY: &[&str] = &[
    "A {color} sky crossed by {skything}.",
    "{skything} hang over {weather} most afternoons.",
    "The sky runs {color} to {color} with {weather} on the wind.",
    "Overhead: {skything}, and {weather} rolling in from the {texture} edge.",
    "{weather} under {skything}.",
    "A {texture} haze tints the light {color}; {skything} show through at night.",
    "Clear {color} skies, broken only by {skything}.",
    "Expect {weather}; {skything} dominate the night.",
];
const SIGNAL: &[&str] = &[
    "Receivers pick up {signalkind} from {source}.",
    "{signalkind}, triangulated to {source}.",
    "Faint {signalkind} bleeding out of {source}.",
    "Sensors log {signalkind}; the source is {source}.",
    "Nothing but {signalkind} from {source}.",
    "Intermittent {signalkind} near {source}, strongest at dusk.",
    "{signalkind} repeats every few minutes from {source}.",
    "A {color}-band scan shows {signalkind} at {source}.",
];
const HAZARDS: &[&str] = &[
    "{hazard} that {effect}",
    "{hazard} near {source}",
    "{weather} that {effect}",
    "{hazard} across the {landform}",
    "{texture} ground hiding {hazard}",
    "{hazard}; they {effect}",
    "{hazard} reported by {faction}",
    "{hazard} around the {mineral} seams",
];
const HOOK: &[&str] = &[
    "{faction} will pay well if you {objective} {urgency}.",
    "Your contact with {faction} asks you to {objective} {urgency}.",
    "Someone at {name} wants you to {objective} {urgency}.",
    "The {sector} office needs a crew to {objective} {urgency}.",
    "Rumour says {faction} failed to {objective}; try {urgency}.",
    "Orders: {objective} {urgency}, then report to {faction}.",
    "A sealed contract: {objective} {urgency}. Sender unknown.",
    "{faction} is hiring: {objective} {urgency}.",
];

const LOG_SLOTS: &[(&str, &[&str])] = &[
    ("mineral", MINERAL),
    ("landform", LANDFORM),
    ("texture", TEXTURE),
    ("color", COLOR),
    ("skything", SKY_THING),
    ("weather", WEATHER),
    ("signalkind", SIGNAL_KIND),
    ("source", SIGNAL_SOURCE),
    ("hazard", HAZARD),
    ("effect", HAZARD_EFFECT),
    ("faction", FACTION),
    ("advice", ADVICE),
    ("mood", MOOD),
    ("keyword", KEYWORD),
];

const LOG_TITLE: &[&str] = &[
    "Survey of {name}",
    "{name}: {mood} arrival",
    "Notes from the {landform} of {name}",
    "{sector} field report",
    "Landfall on {name}",
    "{color} skies over {name}",
    "The {mineral} {landform}",
    "Log: {name}, {mood} day",
];
const LOG_BODY: &[&str] = &[
    "Touched down among {texture} {landform} of {mineral}. The sky is {color} and full of {skything}. We picked up {signalkind} from {source}.",
    "First impressions: {mood}. {texture} {mineral} everywhere, {weather} by afternoon, and {signalkind} on every band.",
    "The {type} world is quieter than the charts suggest. {skything} overhead, {landform} below, {signalkind} from {source}.",
    "Surveyed the {landform} today. {texture} ground, {mineral} deposits, {weather} later. Crew is {mood}.",
    "Long walk across {texture} {landform}. {skything} at dusk. Comms caught {signalkind} near {source}.",
    "{name} greeted us with {weather}. The {mineral} seams look rich. {faction} left markers near {source}.",
    "Sampling run over {color} {mineral}. Night brings {skything}; the receivers never stop hearing {signalkind}.",
    "Made camp by the {landform}. Ground is {texture}, air carries {weather}, and something at {source} keeps transmitting.",
];
const RISK_NOTE: &[&str] = &[
    "Risk {risk}: {hazard} that {effect}. Advice: {advice}.",
    "Rated {risk}. Watch for {hazard}; {advice}.",
    "{risk} risk. {hazard} around the {landform}. {advice}.",
    "Threat level {risk}; {weather} and {hazard}. Recommend we {advice}.",
    "Assessed {risk}. {faction} report {hazard}. {advice}.",
    "{risk} risk overall. Main concern is {hazard}; they {effect}.",
    "Risk is {risk}. {advice}, and expect {hazard}.",
    "Flagged {risk}: {hazard} near {source}. {advice}.",
];
const KEYWORDS: &[&str] = &["{keyword}", "{mineral}", "{mood}", "{keyword}-{keyword}", "{landform}", "{color}", "{keyword} {mood}", "{hazard}"];

pub const MISSION_BRIEF_TEMPLATE: Template = Template {
    fields: &[
        ("terrain", FieldTemplate::Sentence { skeletons: TERRAIN, slots: BRIEF_SLOTS }),
        ("sky", FieldTemplate::Sentence { skeletons: SKY, slots: BRIEF_SLOTS }),
        ("signal", FieldTemplate::Sentence { skeletons: SIGNAL, slots: BRIEF_SLOTS }),
        (
            "hazards",
            FieldTemplate::SentenceList { min: 1, max: 4, skeletons: HAZARDS, slots: BRIEF_SLOTS },
        ),
        ("mission_hook", FieldTemplate::Sentence { skeletons: HOOK, slots: BRIEF_SLOTS }),
        ("risk", FieldTemplate::NodeRisk),
        ("signal_strength", FieldTemplate::Integer { min: 0, max: 100 }),
    ],
};

pub const FIELD_LOG_TEMPLATE: Template = Template {
    fields: &[
        ("log_title", FieldTemplate::Sentence { skeletons: LOG_TITLE, slots: LOG_SLOTS }),
        ("body", FieldTemplate::Sentence { skeletons: LOG_BODY, slots: LOG_SLOTS }),
        ("risk_note", FieldTemplate::Sentence { skeletons: RISK_NOTE, slots: LOG_SLOTS }),
        ("risk", FieldTemplate::NodeRisk),
        ("stardate", FieldTemplate::Real { min: 3000.0, max: 3999.9 }),
        (
            "keywords",
            FieldTemplate::SentenceList { min: 1, max: 3, skeletons: KEYWORDS, slots: LOG_SLOTS },
        ),
    ],
};

pub fn mission_brief() -> PluginSpec {
    PluginSpec {
        name: MISSION_BRIEF.to_string(),
        schema: mission_brief_schema(),
        prompt_builder: mission_brief_prompt,
        template: MISSION_BRIEF_TEMPLATE,
    }
}

pub fn field_log() -> PluginSpec {
    PluginSpec {
        name: FIELD_LOG.to_string(),
        schema: field_log_schema(),
        prompt_builder: field_log_prompt,
        template: FIELD_LOG_TEMPLATE,
    }
}

/// The reference plugins, mission brief first.
pub fn builtin_plugins() -> Vec<PluginSpec> {
    vec![mission_brief(), field_log()]
}
