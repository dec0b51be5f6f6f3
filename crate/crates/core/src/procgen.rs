//! Coordinate hashing and deterministic universe construction.
//!
//! Nothing in here touches storage. Every galaxy, system, node and lane is a
//! pure function of [`GenerationParams`], so regenerating is the persistence
//! strategy: the same coordinate always hashes to the same [`NodeSeed`] and the
//! same seed always expands into the same [`NodeRecord`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::names::{name_from_seed, NameKind};

/// Weyl increment shared by the mixer and the value stream.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Side length of the square each galaxy's nodes are scattered over.
pub const GALAXY_EXTENT: f64 = 120.0;

/// Distance units one unit of fuel buys.
pub const DISTANCE_PER_FUEL: f64 = 10.0;

/// Nearest neighbours each node is laned to, on top of the spanning tree.
pub const NEAREST_LANES: usize = 3;

pub const DENSITY_MIN: f64 = 0.2;
pub const DENSITY_MAX: f64 = 3.0;
pub const GALAXY_COUNT_MIN: u32 = 1;
pub const GALAXY_COUNT_MAX: u32 = 8;
pub const SYSTEMS_MIN: u32 = 4;
pub const SYSTEMS_MAX: u32 = 32;

/// One splitmix64 output step.
#[inline]
pub fn mix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The frozen seed a coordinate hashes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSeed(pub u64);

impl NodeSeed {
    pub fn value(self) -> u64 {
        self.0
    }

    /// Lowercase, zero-padded hex. This is the node id format.
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Display for NodeSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for NodeSeed {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(NodeSeed)
    }
}

/// Hash an integer coordinate pair under a world seed.
///
/// `x` lands in the high 32 bits and `y` in the low 32 bits, both as their
/// two's complement bit patterns, before the pair is folded into the seed.
pub fn hash_coordinate(x: i32, y: i32, world_seed: u64) -> NodeSeed {
    let packed = (u64::from(x as u32) << 32) | u64::from(y as u32);
    NodeSeed(mix64(world_seed ^ packed))
}

/// Draw `stream_index` of the value stream rooted at `seed`, in `[0, 1)`.
pub fn unit_float(seed: NodeSeed, stream_index: u64) -> f64 {
    let bits = mix64(seed.0.wrapping_add(stream_index.wrapping_mul(GOLDEN_GAMMA)));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..len`. `len` must be non-zero.
pub fn pick_index(seed: NodeSeed, stream_index: u64, len: usize) -> usize {
    debug_assert!(len > 0);
    let i = (unit_float(seed, stream_index) * len as f64) as usize;
    i.min(len - 1)
}

/// Uniform integer in `lo..=hi`.
pub fn uniform_int(seed: NodeSeed, stream_index: u64, lo: i64, hi: i64) -> i64 {
    debug_assert!(lo <= hi);
    lo + pick_index(seed, stream_index, (hi - lo + 1) as usize) as i64
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("density {0} outside [{DENSITY_MIN}, {DENSITY_MAX}]")]
    IllegalDensity(f64),
    #[error("galaxy_count {0} outside [{GALAXY_COUNT_MIN}, {GALAXY_COUNT_MAX}]")]
    IllegalGalaxyCount(u32),
    #[error("systems_per_galaxy {0} outside [{SYSTEMS_MIN}, {SYSTEMS_MAX}]")]
    IllegalSystemCount(u32),
}

impl ParamError {
    pub fn code(&self) -> &'static str {
        match self {
            ParamError::IllegalDensity(_) => "IllegalDensity",
            ParamError::IllegalGalaxyCount(_) => "IllegalGalaxyCount",
            ParamError::IllegalSystemCount(_) => "IllegalSystemCount",
        }
    }
}

pub fn density_in_range(density: f64) -> bool {
    (DENSITY_MIN..=DENSITY_MAX).contains(&density)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub world_seed: u64,
    /// Planets-per-system multiplier.
    pub density: f64,
    pub galaxy_count: u32,
    pub systems_per_galaxy: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            world_seed: 0,
            density: 1.0,
            galaxy_count: 3,
            systems_per_galaxy: 8,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !density_in_range(self.density) {
            return Err(ParamError::IllegalDensity(self.density));
        }
        if !(GALAXY_COUNT_MIN..=GALAXY_COUNT_MAX).contains(&self.galaxy_count) {
            return Err(ParamError::IllegalGalaxyCount(self.galaxy_count));
        }
        if !(SYSTEMS_MIN..=SYSTEMS_MAX).contains(&self.systems_per_galaxy) {
            return Err(ParamError::IllegalSystemCount(self.systems_per_galaxy));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(self, other: Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Fuel needed to cross a lane between two positions. Always at least 1.
pub fn travel_cost(a: Position, b: Position) -> u32 {
    let units = (a.distance(b) / DISTANCE_PER_FUEL).ceil();
    (units as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeType {
    Rocky,
    Oceanic,
    GasGiant,
    Metropolis,
    Outpost,
    Anchor,
}

impl NodeType {
    pub const ALL: [NodeType; 6] = [
        NodeType::Rocky,
        NodeType::Oceanic,
        NodeType::GasGiant,
        NodeType::Metropolis,
        NodeType::Outpost,
        NodeType::Anchor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Rocky => "rocky",
            NodeType::Oceanic => "oceanic",
            NodeType::GasGiant => "gas-giant",
            NodeType::Metropolis => "metropolis",
            NodeType::Outpost => "outpost",
            NodeType::Anchor => "anchor",
        }
    }

    fn title(self) -> &'static str {
        match self {
            NodeType::Outpost => "Outpost",
            NodeType::Anchor => "Anchor",
            _ => "Node",
        }
    }

    // Cumulative weights out of 100.
    fn from_draw(u: f64) -> NodeType {
        const CUMULATIVE: [(f64, NodeType); 6] = [
            (0.25, NodeType::Rocky),
            (0.43, NodeType::Oceanic),
            (0.63, NodeType::GasGiant),
            (0.75, NodeType::Metropolis),
            (0.90, NodeType::Outpost),
            (1.00, NodeType::Anchor),
        ];
        CUMULATIVE
            .iter()
            .find(|(edge, _)| u < *edge)
            .map(|(_, t)| *t)
            .unwrap_or(NodeType::Anchor)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Risk {
    Low,
    Medium,
    High,
}

impl Risk {
    pub const ALL: [Risk; 3] = [Risk::Low, Risk::Medium, Risk::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Risk::Low => "low",
            Risk::Medium => "medium",
            Risk::High => "high",
        }
    }

    fn from_draw(u: f64, node_type: NodeType) -> Risk {
        // Gas giants and anchors skew dangerous, metropolises skew safe.
        let (low, medium) = match node_type {
            NodeType::GasGiant | NodeType::Anchor => (0.25, 0.60),
            NodeType::Metropolis => (0.55, 0.90),
            _ => (0.45, 0.80),
        };
        if u < low {
            Risk::Low
        } else if u < medium {
            Risk::Medium
        } else {
            Risk::High
        }
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    pub display_name: String,
    pub sector: String,
    pub node_type: NodeType,
    pub risk: Risk,
    pub position: Position,
    pub resources: u32,
}

// Stream indices used when expanding a node seed.
const STREAM_X: u64 = 0;
const STREAM_Y: u64 = 1;
const STREAM_TYPE: u64 = 2;
const STREAM_RISK: u64 = 3;
const STREAM_RESOURCES: u64 = 4;

impl NodeRecord {
    /// Expand a seed into its full record. No other input is consulted.
    pub fn from_seed(seed: NodeSeed) -> NodeRecord {
        let node_type = NodeType::from_draw(unit_float(seed, STREAM_TYPE));
        let risk = Risk::from_draw(unit_float(seed, STREAM_RISK), node_type);
        let name = name_from_seed(seed, NameKind::Node);
        NodeRecord {
            node_id: seed.to_hex(),
            display_name: format!("{name} {}", node_type.title()),
            sector: name_from_seed(seed, NameKind::Sector),
            node_type,
            risk,
            position: Position {
                x: unit_float(seed, STREAM_X) * GALAXY_EXTENT,
                y: unit_float(seed, STREAM_Y) * GALAXY_EXTENT,
            },
            resources: uniform_int(seed, STREAM_RESOURCES, 0, 100) as u32,
        }
    }

    pub fn seed(&self) -> NodeSeed {
        self.node_id
            .parse()
            .expect("node ids are always produced from seeds")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    pub from: String,
    pub to: String,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarSystem {
    pub index: u32,
    pub label: String,
    /// Centroid of the system's nodes.
    pub position: Position,
    /// Lanes whose `from` endpoint belongs to this system.
    pub lanes: Vec<Lane>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalaxyLayout {
    pub index: u32,
    pub label: String,
    pub seed: String,
    pub position: Position,
    pub systems: Vec<StarSystem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseLayout {
    pub params: GenerationParams,
    pub galaxies: Vec<GalaxyLayout>,
}

impl UniverseLayout {
    /// Canonical wire bytes. The service and the offline generator both emit these.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("layout serialization is infallible")
    }

    pub fn node_count(&self) -> usize {
        self.galaxies
            .iter()
            .flat_map(|g| &g.systems)
            .map(|s| s.nodes.len())
            .sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.galaxies
            .iter()
            .flat_map(|g| &g.systems)
            .flat_map(|s| &s.nodes)
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Lane> {
        self.galaxies
            .iter()
            .flat_map(|g| &g.systems)
            .flat_map(|s| &s.lanes)
    }
}

/// Seed for a galaxy; its position and label are drawn from this stream.
pub fn galaxy_seed(world_seed: u64, galaxy_index: u32) -> NodeSeed {
    hash_coordinate(galaxy_index as i32, 0, world_seed)
}

/// System-level draws use node index -1, which no node ever occupies.
fn system_seed(galaxy_seed: NodeSeed, system_index: u32) -> NodeSeed {
    hash_coordinate(system_index as i32, -1, galaxy_seed.0)
}

pub fn node_seed(galaxy_seed: NodeSeed, system_index: u32, node_index: u32) -> NodeSeed {
    hash_coordinate(system_index as i32, node_index as i32, galaxy_seed.0)
}

/// Nodes in a system: `round(base * density)` with `base` in `[2, 6]`, never
/// fewer than one.
pub fn system_node_count(system_seed: NodeSeed, density: f64) -> u32 {
    let base = uniform_int(system_seed, 0, 2, 6) as f64;
    ((base * density).round() as u32).max(1)
}

pub fn generate_universe(params: &GenerationParams) -> UniverseLayout {
    let galaxies = (0..params.galaxy_count)
        .map(|g| generate_galaxy(params, g))
        .collect();
    UniverseLayout {
        params: *params,
        galaxies,
    }
}

fn generate_galaxy(params: &GenerationParams, index: u32) -> GalaxyLayout {
    let gseed = galaxy_seed(params.world_seed, index);

    let mut systems: Vec<StarSystem> = Vec::with_capacity(params.systems_per_galaxy as usize);
    // (system slot, record) for every node in the galaxy, in generation order.
    let mut flat: Vec<(usize, NodeRecord)> = Vec::new();
    for s in 0..params.systems_per_galaxy {
        let sseed = system_seed(gseed, s);
        let count = system_node_count(sseed, params.density);
        let nodes: Vec<NodeRecord> = (0..count)
            .map(|n| NodeRecord::from_seed(node_seed(gseed, s, n)))
            .collect();
        let position = centroid(nodes.iter().map(|n| n.position));
        for node in &nodes {
            flat.push((s as usize, node.clone()));
        }
        systems.push(StarSystem {
            index: s,
            label: name_from_seed(sseed, NameKind::Sector),
            position,
            lanes: Vec::new(),
            nodes,
        });
    }

    let positions: Vec<Position> = flat.iter().map(|(_, n)| n.position).collect();
    for (a, b) in lane_pairs(&positions) {
        let cost = travel_cost(positions[a], positions[b]);
        systems[flat[a].0].lanes.push(Lane {
            from: flat[a].1.node_id.clone(),
            to: flat[b].1.node_id.clone(),
            cost,
        });
    }

    GalaxyLayout {
        index,
        label: name_from_seed(gseed, NameKind::Galaxy),
        seed: gseed.to_hex(),
        position: Position {
            x: unit_float(gseed, 0),
            y: unit_float(gseed, 1),
        },
        systems,
    }
}

fn centroid(points: impl Iterator<Item = Position>) -> Position {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    if n == 0 {
        return Position { x: 0.0, y: 0.0 };
    }
    Position {
        x: sx / n as f64,
        y: sy / n as f64,
    }
}

fn dist2(a: Position, b: Position) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

/// Undirected lane set as `(lo, hi)` index pairs in ascending order: a
/// minimum spanning tree unioned with each node's nearest neighbours.
/// Distance ties break on index so the result is a pure function of input order.
fn lane_pairs(positions: &[Position]) -> BTreeSet<(usize, usize)> {
    let n = positions.len();
    let mut pairs = BTreeSet::new();
    if n < 2 {
        return pairs;
    }

    // Prim's algorithm, O(n^2); galaxies hold at most a few hundred nodes.
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    best[0] = 0.0;
    for _ in 0..n {
        let mut next = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (next == usize::MAX || best[v] < best[next]) {
                next = v;
            }
        }
        in_tree[next] = true;
        if parent[next] != usize::MAX {
            let p = parent[next];
            pairs.insert((p.min(next), p.max(next)));
        }
        for v in 0..n {
            if !in_tree[v] {
                let d = dist2(positions[next], positions[v]);
                if d < best[v] {
                    best[v] = d;
                    parent[v] = next;
                }
            }
        }
    }

    // Nearest neighbours by (distance, index), kept as a small sorted buffer.
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(NEAREST_LANES + 1);
    for i in 0..n {
        nearest.clear();
        for j in (0..n).filter(|&j| j != i) {
            let cand = (dist2(positions[i], positions[j]), j);
            let closer = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt();
            if nearest.len() == NEAREST_LANES && !closer(&cand, &nearest[NEAREST_LANES - 1]) {
                continue;
            }
            let at = nearest.iter().position(|x| closer(&cand, x)).unwrap_or(nearest.len());
            nearest.insert(at, cand);
            nearest.truncate(NEAREST_LANES);
        }
        for &(_, j) in &nearest {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLocation {
    pub galaxy: u32,
    pub system: u32,
    pub node: u32,
}

/// A generated layout plus lookup indices for physics.
#[derive(Debug, Clone)]
pub struct Universe {
    layout: UniverseLayout,
    index: HashMap<String, (NodeLocation, usize)>,
    adjacency: Vec<Vec<(usize, u32)>>,
    ids: Vec<String>,
}

impl Universe {
    pub fn generate(params: &GenerationParams) -> Universe {
        Universe::from_layout(generate_universe(params))
    }

    pub fn from_layout(layout: UniverseLayout) -> Universe {
        let mut index = HashMap::new();
        let mut ids = Vec::new();
        for g in &layout.galaxies {
            for s in &g.systems {
                for (n, node) in s.nodes.iter().enumerate() {
                    let loc = NodeLocation {
                        galaxy: g.index,
                        system: s.index,
                        node: n as u32,
                    };
                    index.insert(node.node_id.clone(), (loc, ids.len()));
                    ids.push(node.node_id.clone());
                }
            }
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        for lane in layout.lanes() {
            let a = index[&lane.from].1;
            let b = index[&lane.to].1;
            adjacency[a].push((b, lane.cost));
            adjacency[b].push((a, lane.cost));
        }
        Universe {
            layout,
            index,
            adjacency,
            ids,
        }
    }

    pub fn layout(&self) -> &UniverseLayout {
        &self.layout
    }

    pub fn params(&self) -> &GenerationParams {
        &self.layout.params
    }

    pub fn contains(&self, node_id: &str) -> bool {
        self.index.contains_key(node_id)
    }

    pub fn locate(&self, node_id: &str) -> Option<NodeLocation> {
        self.index.get(node_id).map(|(loc, _)| *loc)
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeRecord> {
        let loc = self.locate(node_id)?;
        self.layout.galaxies[loc.galaxy as usize].systems[loc.system as usize]
            .nodes
            .get(loc.node as usize)
    }

    /// Cost of the lane joining `a` and `b`, if one exists.
    pub fn lane_cost(&self, a: &str, b: &str) -> Option<u32> {
        let ia = self.index.get(a)?.1;
        let ib = self.index.get(b)?.1;
        self.adjacency[ia]
            .iter()
            .find(|(j, _)| *j == ib)
            .map(|(_, c)| *c)
    }

    pub fn neighbors(&self, node_id: &str) -> Vec<(&str, u32)> {
        match self.index.get(node_id) {
            Some((_, i)) => self.adjacency[*i]
                .iter()
                .map(|(j, c)| (self.ids[*j].as_str(), *c))
                .collect(),
            None => Vec::new(),
        }
    }

    /// First node of the first system of the first galaxy.
    pub fn spawn(&self) -> &str {
        &self.ids[0]
    }

    pub fn node_ids(&self) -> &[String] {
        &self.ids
    }
}
