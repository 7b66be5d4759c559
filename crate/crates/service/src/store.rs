//! On-disk session store. One directory per session:
//!
//! ```text
//! ROOT/sessions/<session_id>/session.json
//! ROOT/sessions/<session_id>/views/<slot>.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader sees either the previous contents or the complete new ones. View
//! files are written before the session file; on load the cursor is
//! reconciled against the views actually present.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use saliency_core::session::{StoredView, ViewerSession};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("session {0} already exists")]
    SessionExists(String),
    #[error("session {session_id} slot {slot} already stored")]
    ViewExists { session_id: String, slot: usize },
    #[error("invalid session id {0:?}")]
    BadId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Server-side session state. The client never sees the captcha choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    #[serde(flatten)]
    pub session: ViewerSession,
    /// Captcha bank item ids for the start and middle checkpoints.
    pub captchas: [String; 2],
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-') {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(self.root.join("sessions").join(id))
    }

    fn view_path(dir: &Path, slot: usize) -> PathBuf {
        dir.join("views").join(format!("{slot:02}.json"))
    }

    pub fn create(&self, record: &SessionRecord) -> Result<(), StoreError> {
        let dir = self.session_dir(&record.session.session_id)?;
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::SessionExists(record.session.session_id.clone()))
            }
            Err(e) => return Err(io_err(&dir)(e)),
        }
        let views = dir.join("views");
        fs::create_dir(&views).map_err(io_err(&views))?;
        self.save(record)
    }

    pub fn save(&self, record: &SessionRecord) -> Result<(), StoreError> {
        let dir = self.session_dir(&record.session.session_id)?;
        write_json(&dir.join("session.json"), record, true)
    }

    /// Loads a session and reconciles its cursor with the stored views.
    pub fn load(&self, id: &str) -> Result<Option<SessionRecord>, StoreError> {
        let dir = self.session_dir(id)?;
        let path = dir.join("session.json");
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut record: SessionRecord =
            serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path: path.clone(), source })?;
        let stored = (0..record.session.playlist.len()).take_while(|s| Self::view_path(&dir, *s).exists()).count();
        record.session.reconcile(stored);
        Ok(Some(record))
    }

    /// Stores one upload. Fails if the slot is already taken.
    pub fn write_view(&self, view: &StoredView) -> Result<(), StoreError> {
        let dir = self.session_dir(&view.session_id)?;
        let path = Self::view_path(&dir, view.slot);
        write_json(&path, view, false).map_err(|e| match e {
            StoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::AlreadyExists => {
                StoreError::ViewExists { session_id: view.session_id.clone(), slot: view.slot }
            }
            e => e,
        })
    }

    /// Stored views of one session in slot order.
    pub fn views(&self, id: &str) -> Result<Vec<StoredView>, StoreError> {
        let views_dir = self.session_dir(id)?.join("views");
        let mut out = Vec::new();
        let entries = match fs::read_dir(&views_dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(io_err(&views_dir)(e)),
        };
        for entry in entries {
            let path = entry.map_err(io_err(&views_dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                let view: StoredView =
                    serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path: path.clone(), source })?;
                out.push(view);
            }
        }
        out.sort_by_key(|v| v.slot);
        Ok(out)
    }

    /// All session ids, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if entry.path().join("session.json").is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Temp file in the target directory, fsync, then rename (or hard-link when
/// the target must not already exist).
fn write_json<T: Serialize>(path: &Path, value: &T, overwrite: bool) -> Result<(), StoreError> {
    let dir = path.parent().expect("store paths have a parent");
    let bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json { path: path.to_path_buf(), source })?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(&bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    if overwrite {
        tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    } else {
        tmp.persist_noclobber(path).map_err(|e| io_err(path)(e.error))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use saliency_core::session::{PlaylistEntry, SessionState, ViewFlags};
    use saliency_core::types::DisplayGeometry;

    fn record(id: &str) -> SessionRecord {
        let playlist =
            (0..23).map(|i| PlaylistEntry { video_id: format!("clip_{i:03}"), is_validation: i % 8 == 3 }).collect();
        let geometry = DisplayGeometry::fit(1920, 1080, 1920, 1080).unwrap();
        let mut session = ViewerSession::new(id, "viewer", geometry, "en", playlist, 5);
        session.state = SessionState::Viewing { next: 0 };
        session.captcha_passed[0] = true;
        SessionRecord { session, captchas: ["a".into(), "b".into()] }
    }

    fn view(id: &str, slot: usize) -> StoredView {
        StoredView {
            session_id: id.into(),
            slot,
            video_id: format!("clip_{slot:03}"),
            track: "x".into(),
            rating: 3,
            received_at: 9,
            flags: ViewFlags { frequency_hz: 60.0, frequency_ok: true },
        }
    }

    #[test]
    fn roundtrip_and_reconcile() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FileStore::open(tmp.path()).unwrap();
        let rec = record("s1");
        store.create(&rec).unwrap();
        assert!(matches!(store.create(&rec), Err(StoreError::SessionExists(_))));
        assert_eq!(store.load("s1").unwrap().unwrap(), rec);
        assert_eq!(store.load("nope").unwrap(), None);

        // a view written without the session update that should follow it
        store.write_view(&view("s1", 0)).unwrap();
        store.write_view(&view("s1", 1)).unwrap();
        let loaded = store.load("s1").unwrap().unwrap();
        assert_eq!(loaded.session.state, SessionState::Viewing { next: 2 });
        assert!(matches!(store.write_view(&view("s1", 1)), Err(StoreError::ViewExists { slot: 1, .. })));
        assert_eq!(store.views("s1").unwrap().iter().map(|v| v.slot).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(store.session_ids().unwrap(), ["s1"]);
    }

    #[test]
    fn session_file_reads_as_plain_session() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FileStore::open(tmp.path()).unwrap();
        store.create(&record("s2")).unwrap();
        let bytes = fs::read(tmp.path().join("sessions/s2/session.json")).unwrap();
        let plain: ViewerSession = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(plain.session_id, "s2");
    }

    #[test]
    fn rejects_path_like_ids() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FileStore::open(tmp.path()).unwrap();
        assert!(matches!(store.load("../etc"), Err(StoreError::BadId(_))));
        assert!(matches!(store.load(""), Err(StoreError::BadId(_))));
    }

    #[test]
    fn no_temp_files_left_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FileStore::open(tmp.path()).unwrap();
        store.create(&record("s3")).unwrap();
        store.save(&record("s3")).unwrap();
        store.write_view(&view("s3", 0)).unwrap();
        let names: Vec<String> = fs::read_dir(tmp.path().join("sessions/s3"))
            .unwrap()
            .chain(fs::read_dir(tmp.path().join("sessions/s3/views")).unwrap())
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        let mut names = names;
        names.sort();
        assert_eq!(names, ["00.json", "session.json", "views"]);
    }
}
