//! Stable two-part names drawn from embedded word lists.
//!
//! The first part is a syllable compound (onset + coda, 2304 combinations)
//! shared by every kind; the second part comes from a per-kind suffix list, so
//! a node name and a sector name never share a suffix.

use serde::{Deserialize, Serialize};

use crate::procgen::{pick_index, NodeSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameKind {
    Node,
    Sector,
    Galaxy,
}

pub const ONSETS: [&str; 48] = [
    "B", "Br", "C", "Cr", "D", "Dr", "F", "Fr", "G", "Gr", "H", "J", "K", "Kr", "L", "M", "N",
    "P", "Pr", "Qu", "R", "S", "Sk", "Sl", "St", "Sv", "T", "Th", "Tr", "V", "Vr", "W", "X", "Y",
    "Z", "Zh", "Ch", "Sh", "Kh", "Ph", "Gl", "Bl", "Cl", "Fl", "Pl", "Sp", "Tz", "Ly",
];

pub const CODAS: [&str; 48] = [
    "elis", "ex", "aka", "alo", "orin", "ast", "ion", "ara", "enth", "ova", "yx", "umi", "ek",
    "eth", "ian", "os", "ura", "ix", "and", "orr", "esh", "ali", "uun", "ira", "eon", "arn", "yse",
    "olt", "ume", "eri", "ax", "ynn", "ath", "oria", "esk", "ulon", "isse", "ando", "ovi", "ent",
    "ar", "is", "eus", "yra", "one", "adel", "il", "ux",
];

pub const NODE_SUFFIXES: [&str; 64] = [
    "Minor", "Major", "Drift", "Reach", "Corridor", "Prime", "Halo", "Verge", "Hollow", "Crest",
    "Deep", "Spire", "Gate", "Rise", "Fall", "Shoal", "Bastion", "Harbor", "Wake", "Vale", "Crown",
    "Ridge", "Basin", "Mire", "Cradle", "Forge", "Rest", "Watch", "Station", "Landing", "Terminus",
    "Pass", "Point", "Anchorage", "Circuit", "Relay", "Beacon", "Haven", "Reef", "Shelf", "Echo",
    "Ember", "Frost", "Bloom", "Shard", "Cinder", "Glass", "Tide", "Storm", "Ash", "Iron",
    "Quartz", "Lumen", "Nadir", "Zenith", "Orbit", "Axis", "Meridian", "Lantern", "Delta",
    "Sigma", "Tertius", "Secundus", "Hold",
];

pub const SECTOR_SUFFIXES: [&str; 64] = [
    "Expanse", "March", "Frontier", "Dominion", "Protectorate", "Belt", "Cluster", "Rim",
    "Sprawl", "Quadrant", "Sector", "Territory", "Commons", "Fringe", "Hinterland", "Tract",
    "Demesne", "Province", "Mandate", "Range", "Lowlands", "Highlands", "Straits", "Narrows",
    "Shallows", "Reaches", "Wilds", "Barrens", "Sound", "Gulf", "Estate", "Holdings", "League",
    "Compact", "Concord", "Accord", "Union", "Freehold", "Charter", "Claim", "Stretch", "Divide",
    "Circle", "Ring", "Band", "Lane", "Run", "Trace", "Route", "Way", "Causeway", "Crossing",
    "Junction", "Nexus", "Hub", "Mesh", "Lattice", "Grid", "Field", "Plain", "Steppe", "Scarp",
    "Shore", "Coast",
];

pub const GALAXY_SUFFIXES: [&str; 64] = [
    "Spiral", "Wheel", "Cloud", "Whorl", "Vortex", "Maelstrom", "Cascade", "Fountain", "Garden",
    "Sea", "Ocean", "River", "Stream", "Cauldron", "Crucible", "Mirror", "Lens", "Prism", "Eye",
    "Heart", "Throne", "Cathedral", "Choir", "Chorus", "Hymn", "Canticle", "Veil", "Shroud",
    "Mantle", "Cloak", "Tapestry", "Loom", "Weave", "Skein", "Braid", "Coil", "Helix", "Arc",
    "Bow", "Fan", "Plume", "Feather", "Wing", "Tail", "Comet", "Nebula", "Mist", "Haze", "Fog",
    "Aurora", "Corona", "Radiance", "Glow", "Flare", "Blaze", "Pyre", "Furnace", "Kiln", "Anvil",
    "Hammer", "Chalice", "Urn", "Vessel", "Reliquary",
];

impl NameKind {
    pub fn suffixes(self) -> &'static [&'static str; 64] {
        match self {
            NameKind::Node => &NODE_SUFFIXES,
            NameKind::Sector => &SECTOR_SUFFIXES,
            NameKind::Galaxy => &GALAXY_SUFFIXES,
        }
    }

    // Each kind reads its own stream indices, well clear of the node-attribute streams.
    fn stream_base(self) -> u64 {
        match self {
            NameKind::Node => 100,
            NameKind::Sector => 110,
            NameKind::Galaxy => 120,
        }
    }
}

/// `"<Prefix> <Suffix>"`, e.g. `"Velis Minor"`.
pub fn name_from_seed(seed: NodeSeed, kind: NameKind) -> String {
    let base = kind.stream_base();
    let prefix = pick_index(seed, base, ONSETS.len() * CODAS.len());
    let suffix = pick_index(seed, base + 1, 64);
    format!(
        "{}{} {}",
        ONSETS[prefix / CODAS.len()],
        CODAS[prefix % CODAS.len()],
        kind.suffixes()[suffix]
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn word_lists_are_distinct_and_disjoint() {
        let mut all = HashSet::new();
        for kind in [NameKind::Node, NameKind::Sector, NameKind::Galaxy] {
            let list = kind.suffixes();
            let set: HashSet<_> = list.iter().collect();
            assert_eq!(set.len(), 64, "{kind:?} suffixes repeat");
            for w in list {
                assert!(all.insert(*w), "{w} appears in two suffix lists");
            }
        }
        let onsets: HashSet<_> = ONSETS.iter().collect();
        let codas: HashSet<_> = CODAS.iter().collect();
        assert_eq!(onsets.len(), ONSETS.len());
        assert_eq!(codas.len(), CODAS.len());
    }

    #[test]
    fn same_seed_same_name() {
        let seed = NodeSeed(0xfeed);
        assert_eq!(
            name_from_seed(seed, NameKind::Node),
            name_from_seed(seed, NameKind::Node)
        );
    }

    #[test]
    fn kinds_draw_from_their_own_suffix_list() {
        for v in 0..200u64 {
            let seed = NodeSeed(crate::procgen::mix64(v));
            for kind in [NameKind::Node, NameKind::Sector, NameKind::Galaxy] {
                let name = name_from_seed(seed, kind);
                let suffix = name.rsplit(' ').next().unwrap();
                assert!(kind.suffixes().contains(&suffix), "{name} for {kind:?}");
            }
        }
    }

    #[test]
    fn thousand_seeds_give_at_least_990_names() {
        let names: HashSet<String> = (0..1000u64)
            .map(|i| name_from_seed(crate::procgen::hash_coordinate(i as i32, 7, 2024), NameKind::Node))
            .collect();
        assert!(names.len() >= 990, "only {} distinct names", names.len());
    }
}
