//! In-memory voyager sessions with an optional append-only snapshot.
//!
//! Each session sits behind its own async mutex. Writers take it with
//! `try_lock`, so a second concurrent writer is refused rather than queued.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::{Mutex as AsyncMutex, MutexGuard};
use wwm_core::wire::SnapshotLine;
use wwm_core::world::{apply_action_with, initial_state, UniverseSource};
use wwm_core::{GenerationParams, PhysicsState};

#[derive(Debug)]
pub struct Session {
    pub origin: GenerationParams,
    pub state: PhysicsState,
}

pub type SessionSlot = Arc<AsyncMutex<Session>>;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("snapshot {path} line {line}: {reason}")]
    Replay { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SessionSlot>>,
    snapshot: Option<(PathBuf, Mutex<File>)>,
}

/// Session ids are path segments and snapshot keys, so keep them tame.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays `path` (if it exists) and keeps appending committed actions to it.
    pub fn with_snapshot(source: &impl UniverseSource, path: &Path) -> Result<Self, SnapshotError> {
        let io_err = |source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut store = SessionStore::new();
        match File::open(path) {
            Ok(f) => store.replay(source, path, BufReader::new(f))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(e)),
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        store.snapshot = Some((path.to_path_buf(), Mutex::new(file)));
        Ok(store)
    }

    fn replay(&mut self, source: &impl UniverseSource, path: &Path, reader: impl BufRead) -> Result<(), SnapshotError> {
        let sessions = self.sessions.get_mut().unwrap();
        for (i, line) in reader.lines().enumerate() {
            let fail = |reason: String| SnapshotError::Replay {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let line = line.map_err(|source| SnapshotError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SnapshotLine = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
            let slot = sessions.entry(rec.session_id.clone()).or_insert_with(|| {
                Arc::new(AsyncMutex::new(Session {
                    origin: rec.origin,
                    state: initial_state(source, rec.origin, rec.session_id.clone()),
                }))
            });
            let mut session = slot.try_lock().expect("replay owns every session");
            let next = apply_action_with(source, &session.state, &rec.action).map_err(|e| fail(e.to_string()))?;
            if next.tick != rec.tick {
                return Err(fail(format!("expected tick {}, replay produced {}", rec.tick, next.tick)));
            }
            session.state = next;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<SessionSlot> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    /// The slot for `id`, creating a fresh session at spawn if needed.
    pub fn get_or_create(&self, source: &impl UniverseSource, id: &str, params: GenerationParams) -> SessionSlot {
        if let Some(slot) = self.get(id) {
            return slot;
        }
        // Build outside the map lock; generation can take a moment.
        let fresh = Arc::new(AsyncMutex::new(Session {
            origin: params,
            state: initial_state(source, params, id),
        }));
        self.sessions
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert(fresh)
            .clone()
    }

    /// Exclusive access for a writer, or `None` if another writer holds it.
    pub fn try_write(slot: &SessionSlot) -> Option<MutexGuard<'_, Session>> {
        slot.try_lock().ok()
    }

    /// Appends one committed action. Must be called while holding the session lock.
    pub fn record(&self, line: &SnapshotLine) -> io::Result<()> {
        let Some((_, file)) = &self.snapshot else {
            return Ok(());
        };
        let mut bytes = serde_json::to_vec(line).expect("snapshot lines serialize");
        bytes.push(b'\n');
        let mut f = file.lock().unwrap();
        f.write_all(&bytes)?;
        f.flush()
    }

    pub fn snapshot_path(&self) -> Option<&Path> {
        self.snapshot.as_ref().map(|(p, _)| p.as_path())
    }
}
