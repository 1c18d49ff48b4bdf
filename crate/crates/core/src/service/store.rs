//! Append-only session log. Each session lives in its own directory as an
//! `events.jsonl` file; every event carries a full snapshot, so recovery only
//! needs the last readable line.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Answered,
    Finished,
    Aborted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub snapshot: SessionRecord,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id).join("events.jsonl")
    }

    /// Appends one event and syncs it before returning.
    pub fn append(&self, event: &StoredEvent) -> std::io::Result<()> {
        let path = self.log_path(&event.snapshot.id);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(line.as_bytes())?;
        file.sync_data()
    }

    /// Last readable event of every session. A torn or corrupt line is
    /// skipped; a session with no readable line is ignored.
    pub fn recover(&self) -> std::io::Result<Vec<StoredEvent>> {
        let mut out = Vec::new();
        let mut dirs: Vec<_> = fs::read_dir(self.root.join("sessions"))?.filter_map(Result::ok).collect();
        dirs.sort_by_key(|d| d.file_name());
        for dir in dirs {
            let path = dir.path().join("events.jsonl");
            let Ok(raw) = fs::read_to_string(&path) else { continue };
            let last = raw
                .lines()
                .filter(|l| !l.trim().is_empty())
                .filter_map(|l| match serde_json::from_str::<StoredEvent>(l) {
                    Ok(e) => Some(e),
                    Err(err) => {
                        log::warn!("skipping unreadable line in {}: {err}", path.display());
                        None
                    }
                })
                .next_back();
            match last {
                Some(e) => out.push(e),
                None => log::warn!("no readable events in {}", path.display()),
            }
        }
        Ok(out)
    }
}
