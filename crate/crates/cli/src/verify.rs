//! Determinism self-check: every node record and base-tier document must come
//! out byte-identical when rebuilt from scratch, and mix64 must match the
//! reference vectors.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};
use wwm_core::plugins::builtin_plugins;
use wwm_core::procgen::{hash_coordinate, mix64, NodeRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorMismatch {
    pub line: usize,
    pub input: String,
    pub detail: String,
}

/// Checks `input_hex<TAB>output_hex` lines. Returns the number of vectors checked.
pub fn check_vectors(text: &str) -> Result<usize, Vec<VectorMismatch>> {
    let mut bad = Vec::new();
    let mut checked = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        checked += 1;
        let mut parts = line.split_whitespace();
        let (input, expected) = (parts.next().unwrap_or(""), parts.next());
        let parse = |s: &str| u64::from_str_radix(s.trim_start_matches("0x"), 16).ok();
        let mismatch = |detail: String| VectorMismatch {
            line: i + 1,
            input: input.to_string(),
            detail,
        };
        match (parse(input), expected.and_then(parse)) {
            (Some(x), Some(want)) => {
                let got = mix64(x);
                if got != want {
                    bad.push(mismatch(format!("expected {want:016x}, got {got:016x}")));
                }
            }
            _ => bad.push(mismatch("malformed line".into())),
        }
    }
    if checked == 0 {
        bad.push(VectorMismatch {
            line: 0,
            input: String::new(),
            detail: "no vectors in file".into(),
        });
    }
    if bad.is_empty() {
        Ok(checked)
    } else {
        Err(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordMismatch {
    pub x: i32,
    pub y: i32,
    pub item: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub world_seed: u64,
    pub coordinates: usize,
    pub documents: usize,
    pub vectors: Result<usize, Vec<VectorMismatch>>,
    pub mismatches: Vec<CoordMismatch>,
    pub digest: String,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.vectors.is_ok() && self.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.vectors {
            Ok(n) => writeln!(out, "mix64 vectors: {n} ok").unwrap(),
            Err(bad) => {
                writeln!(out, "mix64 vectors: {} failed", bad.len()).unwrap();
                for b in bad {
                    writeln!(out, "  vector line {} ({}): {}", b.line, b.input, b.detail).unwrap();
                }
            }
        }
        writeln!(out, "world seed: {}", self.world_seed).unwrap();
        writeln!(out, "coordinates: {}", self.coordinates).unwrap();
        writeln!(out, "documents: {}", self.documents).unwrap();
        writeln!(out, "mismatches: {}", self.mismatches.len()).unwrap();
        for m in &self.mismatches {
            writeln!(out, "  mismatch at ({}, {}): {}", m.x, m.y, m.item).unwrap();
        }
        writeln!(out, "digest: {}", self.digest).unwrap();
        out
    }
}

/// One pass over the coordinates from a clean slate: the serialized record and
/// every plugin's base document, per coordinate.
fn build(coords: &[(i32, i32)], world_seed: u64) -> Vec<Vec<(String, Vec<u8>)>> {
    let plugins = builtin_plugins();
    coords
        .iter()
        .map(|&(x, y)| {
            let seed = hash_coordinate(x, y, world_seed);
            let node = NodeRecord::from_seed(seed);
            let mut items = vec![("record".to_string(), serde_json::to_vec(&node).expect("records serialize"))];
            for p in &plugins {
                items.push((format!("{} document", p.name), p.render_template(&node, seed).to_json_bytes()));
            }
            items
        })
        .collect()
}

pub fn coordinates(n: usize, world_seed: u64) -> Vec<(i32, i32)> {
    let mut rng = StdRng::seed_from_u64(world_seed);
    (0..n).map(|_| (rng.gen(), rng.gen())).collect()
}

pub fn run(n: usize, world_seed: u64, vectors: &str) -> Report {
    let coords = coordinates(n, world_seed);
    let first = build(&coords, world_seed);
    let second = build(&coords, world_seed);

    let mut mismatches = Vec::new();
    let mut hasher = Sha256::new();
    let mut documents = 0;
    for ((&(x, y), a), b) in coords.iter().zip(&first).zip(&second) {
        for ((item, bytes_a), (_, bytes_b)) in a.iter().zip(b) {
            if item != "record" {
                documents += 1;
            }
            if bytes_a != bytes_b {
                mismatches.push(CoordMismatch { x, y, item: item.clone() });
            }
            hasher.update(bytes_a);
        }
    }
    Report {
        world_seed,
        coordinates: n,
        documents,
        vectors: check_vectors(vectors),
        mismatches,
        digest: hex::encode(hasher.finalize()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_vectors_pass() {
        assert_eq!(check_vectors(wwm_core::MIX64_VECTORS), Ok(64));
    }

    #[test]
    fn corrupted_vector_is_named() {
        let text = "0000000000000000\te220a8397b1dcdaf\n0000000000000001\t0000000000000000\nzz\n";
        let bad = check_vectors(text).unwrap_err();
        assert_eq!(bad.len(), 2);
        assert_eq!((bad[0].line, bad[0].input.as_str()), (2, "0000000000000001"));
        assert_eq!(bad[1].detail, "malformed line");
        assert!(check_vectors("").is_err());
    }

    #[test]
    fn report_is_reproducible() {
        let a = run(20, 3, wwm_core::MIX64_VECTORS);
        assert!(a.passed());
        assert_eq!(a.documents, 40);
        assert_eq!(a.render(), run(20, 3, wwm_core::MIX64_VECTORS).render());
        assert_ne!(a.digest, run(20, 4, wwm_core::MIX64_VECTORS).digest);
    }
}
