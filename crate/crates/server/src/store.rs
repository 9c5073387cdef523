//! On-disk persistence: one JSON Lines log per session plus a
//! content-addressed blob directory.
//!
//! Layout under the data root:
//!
//! ```text
//! sessions/<session_id>.jsonl
//! blobs/<sha256 hex>.png
//! ```
//!
//! Every event is written and fsynced before the append is acknowledged.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cocreate_core::blob::{sha256_hex, BlobError, BlobRef, BlobStore};
use cocreate_core::ids::SessionId;
use cocreate_core::session::{Event, EventKind, EventSink, Session, SessionError, SessionLog};
use cocreate_core::studio::{SessionHandle, Studio};
use cocreate_core::StudioError;
use parking_lot::RwLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: corrupt event at seq {seq}: {detail}")]
    Corrupt {
        path: PathBuf,
        seq: u64,
        detail: String,
    },
    #[error("{path}: {source}")]
    Replay {
        path: PathBuf,
        #[source]
        source: SessionError,
    },
    #[error("session {0} already exists")]
    Exists(SessionId),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Blobs as `<hex>.png` files; writing the same bytes twice is a no-op.
pub struct FsBlobStore {
    dir: PathBuf,
}

impl FsBlobStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.png"))
    }

    pub fn file_count(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
            .count())
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<BlobRef, BlobError> {
        let digest = sha256_hex(bytes);
        let path = self.path_for(&digest);
        if !path.exists() {
            // write to a temp name and rename so readers never see a partial file
            let tmp = self.dir.join(format!(".{digest}.{}.tmp", std::process::id()));
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(BlobRef::new(format!("sha256:{digest}")))
    }

    fn get(&self, r: &BlobRef) -> Result<Vec<u8>, BlobError> {
        let digest = r
            .digest()
            .filter(|d| d.chars().all(|c| c.is_ascii_hexdigit()))
            .ok_or_else(|| BlobError::NotFound(r.clone()))?;
        match fs::read(self.path_for(digest)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(BlobError::NotFound(r.clone())),
            Err(e) => Err(e.into()),
        }
    }
}

/// Appends events to a session file, fsyncing each one. The file is opened
/// on the first event, named after the session id it carries.
pub struct JsonlSink {
    dir: PathBuf,
    file: Option<File>,
}

impl JsonlSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            file: None,
        }
    }

    pub fn resume(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            file: Some(file),
        })
    }
}

impl EventSink for JsonlSink {
    fn persist(&mut self, event: &Event) -> io::Result<()> {
        if self.file.is_none() {
            let EventKind::SessionCreated { session_id, .. } = &event.kind else {
                return Err(io::Error::other("first event of a new log must be SessionCreated"));
            };
            let path = self.dir.join(format!("{session_id}.jsonl"));
            let file = OpenOptions::new().create_new(true).append(true).open(&path)?;
            File::open(&self.dir)?.sync_all()?;
            self.file = Some(file);
        }
        let file = self.file.as_mut().expect("opened above");
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()
    }
}

/// Read a log, repairing a torn final line. Returns the events and whether
/// the file was truncated.
pub fn load_log(path: &Path) -> Result<(Vec<Event>, bool), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut events = Vec::new();
    let mut offset = 0usize;
    let mut truncated = false;
    while offset < bytes.len() {
        let end = bytes[offset..].iter().position(|b| *b == b'\n').map(|i| offset + i);
        let line_end = end.unwrap_or(bytes.len());
        let line = &bytes[offset..line_end];
        let is_last = end.is_none_or(|e| e + 1 >= bytes.len());
        let parsed = if line.iter().all(u8::is_ascii_whitespace) {
            None
        } else {
            Some(serde_json::from_slice::<Event>(line))
        };
        match parsed {
            None => {}
            Some(Ok(e)) if end.is_some() => events.push(e),
            // a complete-looking record without its newline is still torn
            Some(Ok(_)) | Some(Err(_)) if is_last => {
                log::warn!(
                    "{}: dropping torn trailing record at byte {offset} ({} bytes)",
                    path.display(),
                    bytes.len() - offset
                );
                let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                f.set_len(offset as u64).map_err(io_err(path))?;
                f.sync_all().map_err(io_err(path))?;
                truncated = true;
                break;
            }
            Some(Ok(_)) => unreachable!("only the last line can lack a newline"),
            Some(Err(e)) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    seq: events.last().map_or(1, |e: &Event| e.seq + 1),
                    detail: e.to_string(),
                })
            }
        }
        offset = line_end + 1;
    }
    Ok((events, truncated))
}

/// All sessions of a data directory, loaded at startup.
pub struct SessionStore {
    sessions_dir: PathBuf,
    sessions: RwLock<HashMap<SessionId, Arc<SessionHandle>>>,
}

impl SessionStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let sessions_dir = root.join("sessions");
        fs::create_dir_all(&sessions_dir).map_err(io_err(&sessions_dir))?;
        let store = Self {
            sessions_dir,
            sessions: RwLock::new(HashMap::new()),
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&store.sessions_dir)
            .map_err(io_err(&store.sessions_dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let (events, _) = load_log(&path)?;
            if events.is_empty() {
                log::warn!("{}: empty log ignored", path.display());
                continue;
            }
            let mut log = SessionLog::from_events(events).map_err(|source| StoreError::Replay {
                path: path.clone(),
                source,
            })?;
            log.set_sink(Box::new(JsonlSink::resume(&path).map_err(io_err(&path))?));
            let id = log.session().session_id.clone();
            store.sessions.write().insert(id, SessionHandle::new(log));
        }
        Ok(store)
    }

    pub fn sessions_dir(&self) -> &Path {
        &self.sessions_dir
    }

    pub fn sink(&self) -> Box<dyn EventSink> {
        Box::new(JsonlSink::new(&self.sessions_dir))
    }

    pub fn create(&self, studio: &Studio, task_prompt: &str) -> Result<Arc<SessionHandle>, StudioError> {
        let handle = studio.create_session(task_prompt, Some(self.sink()))?;
        self.sessions.write().insert(handle.session_id(), handle.clone());
        Ok(handle)
    }

    /// Store an exported log as a new session.
    pub fn import(&self, events: Vec<Event>) -> Result<Arc<SessionHandle>, StoreError> {
        let log = SessionLog::from_events(events.clone()).map_err(|source| StoreError::Replay {
            path: self.sessions_dir.clone(),
            source,
        })?;
        let id = log.session().session_id.clone();
        if self.get(&id).is_some() {
            return Err(StoreError::Exists(id));
        }
        let mut sink = JsonlSink::new(&self.sessions_dir);
        let path = self.sessions_dir.join(format!("{id}.jsonl"));
        for e in &events {
            sink.persist(e).map_err(io_err(&path))?;
        }
        let mut log = log;
        log.set_sink(Box::new(sink));
        let handle = SessionHandle::new(log);
        self.sessions.write().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &SessionId) -> Option<Arc<SessionHandle>> {
        self.sessions.read().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// First session whose state satisfies `pred`.
    pub fn find(&self, pred: impl Fn(&Session) -> bool) -> Option<Arc<SessionHandle>> {
        self.sessions
            .read()
            .values()
            .find(|h| h.read(&pred))
            .cloned()
    }
}
