//! File-backed document cache keyed by the procedural seed.
//!
//! Layout: `<root>/<schema_name>/<schema_version>/<seed_hex>-<plugin>.json`,
//! one entry per file. Writes go through a temp file and a rename so readers
//! never observe a half-written entry.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FidelityTier;
use crate::procgen::NodeSeed;
use crate::schema::GeneratedDocument;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub seed_hex: String,
    pub plugin: String,
    pub schema_name: String,
    pub schema_version: u32,
}

impl CacheKey {
    pub fn new(seed: NodeSeed, plugin: &str, schema_name: &str, schema_version: u32) -> Self {
        CacheKey {
            seed_hex: seed.to_hex(),
            plugin: plugin.to_string(),
            schema_name: schema_name.to_string(),
            schema_version,
        }
    }

    fn well_formed(&self) -> bool {
        let component = |s: &str| {
            !s.is_empty()
                && s
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        };
        self.seed_hex.len() == 16
            && self.seed_hex.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
            && component(&self.plugin)
            && component(&self.schema_name)
    }

    pub fn file_name(&self) -> String {
        format!("{}-{}.json", self.seed_hex, self.plugin)
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.seed_hex, self.plugin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub document: GeneratedDocument,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub tier: FidelityTier,
    /// Whether the provider was given the node seed as its sampling seed.
    #[serde(default)]
    pub seeded_sampling: bool,
}

impl CacheEntry {
    pub fn new(key: CacheKey, document: GeneratedDocument, seeded_sampling: bool) -> Self {
        CacheEntry {
            key,
            document,
            created_at: now_secs(),
            tier: FidelityTier::High,
            seeded_sampling,
        }
    }

    pub fn age_secs(&self) -> u64 {
        now_secs().saturating_sub(self.created_at)
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("malformed cache key {0:?}")]
    BadKey(CacheKey),
    #[error("cache storage error at {path}: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("corrupt cache entry at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug)]
pub struct FileCache {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl FileCache {
    /// Opens (creating if needed) a cache rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| CacheError::Storage {
            path: root.clone(),
            source,
        })?;
        if !root.is_dir() {
            return Err(CacheError::Storage {
                path: root.clone(),
                source: io::Error::other("not a directory"),
            });
        }
        Ok(FileCache {
            root,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root
            .join(&key.schema_name)
            .join(key.schema_version.to_string())
            .join(key.file_name())
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, CacheError> {
        if !key.well_formed() {
            return Err(CacheError::BadKey(key.clone()));
        }
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Storage { path, source }),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| CacheError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if &entry.key != key {
            return Err(CacheError::Corrupt {
                path,
                reason: "stored key does not match its location".into(),
            });
        }
        Ok(Some(entry))
    }

    /// Writes `entry`, replacing any existing entry for the same key.
    pub fn put(&self, entry: &CacheEntry) -> Result<(), CacheError> {
        if !entry.key.well_formed() {
            return Err(CacheError::BadKey(entry.key.clone()));
        }
        let path = self.path_for(&entry.key);
        let dir = path.parent().expect("entry paths have a parent");
        let storage = |source| CacheError::Storage {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(storage)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            entry.key.file_name(),
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entries serialize");
        let write = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            storage(e)
        })
    }

    /// Paths of every entry file, sorted.
    fn entry_paths(&self) -> Result<Vec<PathBuf>, CacheError> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            let rd = match fs::read_dir(&dir) {
                Ok(rd) => rd,
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(source) => return Err(CacheError::Storage { path: dir, source }),
            };
            for item in rd {
                let item = item.map_err(|source| CacheError::Storage {
                    path: dir.clone(),
                    source,
                })?;
                let path = item.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "json")
                    && !path
                        .file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with('.'))
                {
                    out.push(path);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Every readable entry, in path order. Unreadable files are skipped.
    pub fn list(&self) -> Result<Vec<CacheEntry>, CacheError> {
        Ok(self
            .entry_paths()?
            .into_iter()
            .filter_map(|p| fs::read(&p).ok())
            .filter_map(|b| serde_json::from_slice(&b).ok())
            .collect())
    }

    pub fn count(&self) -> usize {
        self.entry_paths().map(|p| p.len()).unwrap_or(0)
    }

    /// Deletes every entry and returns how many were removed.
    pub fn clear(&self) -> Result<usize, CacheError> {
        let paths = self.entry_paths()?;
        for p in &paths {
            fs::remove_file(p).map_err(|source| CacheError::Storage {
                path: p.clone(),
                source,
            })?;
        }
        Ok(paths.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FieldKind, FieldSpec, SchemaDef};

    fn entry(seed: u64) -> CacheEntry {
        let def = SchemaDef::new("planet", 1, vec![FieldSpec::required("biome", FieldKind::Text)]);
        let doc = GeneratedDocument::new(&def).with("biome", format!("biome-{seed}"));
        CacheEntry::new(CacheKey::new(NodeSeed(seed), "mission-brief", "planet", 1), doc, true)
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        let e = entry(1);
        cache.put(&e).unwrap();
        let back = cache.get(&e.key).unwrap().unwrap();
        assert_eq!(back, e);
        assert_eq!(back.document.to_json_bytes(), e.document.to_json_bytes());
        assert!(cache
            .path_for(&e.key)
            .ends_with("planet/1/0000000000000001-mission-brief.json"));
    }

    #[test]
    fn unknown_key_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        assert!(cache.get(&entry(2).key).unwrap().is_none());
        assert_eq!(cache.count(), 0);
    }

    #[test]
    fn put_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        let mut e = entry(3);
        cache.put(&e).unwrap();
        e.document = e.document.with("biome", "replaced");
        cache.put(&e).unwrap();
        assert_eq!(cache.get(&e.key).unwrap().unwrap().document.values["biome"], "replaced");
        assert_eq!(cache.count(), 1);
    }

    #[test]
    fn malformed_keys_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        let mut e = entry(4);
        e.key.plugin = "../escape".into();
        assert!(matches!(cache.put(&e), Err(CacheError::BadKey(_))));
        assert!(matches!(cache.get(&e.key), Err(CacheError::BadKey(_))));
    }

    #[test]
    fn corrupt_file_is_an_error_not_a_panic() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        let e = entry(5);
        cache.put(&e).unwrap();
        fs::write(cache.path_for(&e.key), b"{ nope").unwrap();
        assert!(matches!(cache.get(&e.key), Err(CacheError::Corrupt { .. })));
        assert!(cache.list().unwrap().is_empty());
    }

    #[test]
    fn list_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FileCache::open(dir.path()).unwrap();
        for s in 0..3 {
            cache.put(&entry(s)).unwrap();
        }
        assert_eq!(cache.list().unwrap().len(), 3);
        assert_eq!(cache.clear().unwrap(), 3);
        assert_eq!(cache.count(), 0);
    }

    #[test]
    fn open_on_a_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, b"x").unwrap();
        assert!(FileCache::open(&file).is_err());
    }
}
