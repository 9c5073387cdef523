//! Command layer: turns user actions into provider calls and events.
//!
//! Provider calls never run while the session log is locked, so reads stay
//! responsive and generations for different tabs can overlap; completion
//! events are sequenced in arrival order. Brainstorm/expand are serialized
//! per session and sketch/variation work is serialized per tab.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use crate::blob::{BlobError, BlobStore, MemoryBlobStore};
use crate::clock::{Clock, SteppingClock, SystemClock};
use crate::ideation::{IdeationMode, SchemaError};
use crate::ids::{IdGenerator, ImageId, SessionId, TabId};
use crate::instructions::Instructions;
use crate::providers::{ProviderError, Providers};
use crate::session::{
    Event, EventKind, EventSink, ImageRecord, Quality, Session, SessionError, SessionLog, Tab,
};
use crate::sketch::{SelectionError, Violation};
use crate::tiling::GridError;

#[derive(Debug, Error)]
pub enum StudioError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("sketch synthesis failed: {}", .violations.iter().map(|v| v.detail.as_str()).collect::<Vec<_>>().join("; "))]
    SketchSynthesis { violations: Vec<Violation> },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Blob(#[from] BlobError),
}

impl StudioError {
    pub fn not_found(kind: &'static str, id: impl ToString) -> Self {
        StudioError::Session(SessionError::not_found(kind, id))
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        StudioError::Session(SessionError::Invalid(detail.into()))
    }
}

/// Bounds applied to synthesized sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchBounds {
    pub min_params: usize,
    pub max_params: usize,
    pub min_options: usize,
    pub max_options: usize,
}

impl Default for SketchBounds {
    fn default() -> Self {
        Self {
            min_params: 1,
            max_params: 8,
            min_options: 2,
            max_options: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudioConfig {
    pub mode: IdeationMode,
    pub ideas_per_request: usize,
    /// Columns of the thumbnail sheet; rows follow from the idea count.
    pub grid_cols: u32,
    pub idea_image_quality: Quality,
    pub variation_quality: Quality,
    pub sketch_bounds: SketchBounds,
}

impl Default for StudioConfig {
    fn default() -> Self {
        Self {
            mode: IdeationMode::Associative,
            ideas_per_request: 9,
            grid_cols: 3,
            idea_image_quality: Quality::Medium,
            variation_quality: Quality::Auto,
            sketch_bounds: SketchBounds::default(),
        }
    }
}

/// One session's log plus the locks that order commands against it.
pub struct SessionHandle {
    log: Mutex<SessionLog>,
    ideation: Mutex<()>,
    tab_locks: Mutex<HashMap<TabId, Arc<Mutex<()>>>>,
}

impl SessionHandle {
    pub fn new(log: SessionLog) -> Arc<Self> {
        Arc::new(Self {
            log: Mutex::new(log),
            ideation: Mutex::new(()),
            tab_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn session_id(&self) -> SessionId {
        self.log.lock().session().session_id.clone()
    }

    pub fn snapshot(&self) -> Session {
        self.log.lock().session().clone()
    }

    pub fn read<R>(&self, f: impl FnOnce(&Session) -> R) -> R {
        f(self.log.lock().session())
    }

    pub fn events(&self) -> Vec<Event> {
        self.log.lock().events().to_vec()
    }

    pub fn event_count(&self) -> usize {
        self.log.lock().events().len()
    }

    pub fn export_jsonl(&self) -> String {
        self.log.lock().export_jsonl()
    }

    /// Run `f` with exclusive access to the log, e.g. to append several
    /// events without interleaving.
    pub fn with_log<R>(&self, f: impl FnOnce(&mut SessionLog) -> R) -> R {
        f(&mut self.log.lock())
    }

    pub(crate) fn ideation_lock(&self) -> parking_lot::MutexGuard<'_, ()> {
        self.ideation.lock()
    }

    pub(crate) fn tab_lock(&self, tab: &TabId) -> Arc<Mutex<()>> {
        self.tab_locks.lock().entry(tab.clone()).or_default().clone()
    }
}

pub struct Studio {
    pub providers: Providers,
    pub blobs: Arc<dyn BlobStore>,
    pub ids: Arc<IdGenerator>,
    pub clock: Arc<dyn Clock>,
    pub config: StudioConfig,
    pub instructions: Arc<Instructions>,
}

impl Studio {
    pub fn new(providers: Providers, blobs: Arc<dyn BlobStore>) -> Self {
        Self {
            providers,
            blobs,
            ids: Arc::new(IdGenerator::random()),
            clock: Arc::new(SystemClock),
            config: StudioConfig::default(),
            instructions: Arc::new(Instructions::builtin()),
        }
    }

    /// Fully deterministic studio: mock providers, seeded ids, a stepping
    /// clock and in-memory blobs.
    pub fn mock(seed: u64) -> Self {
        Self {
            providers: Providers::mock(seed),
            blobs: Arc::new(MemoryBlobStore::new()),
            ids: Arc::new(IdGenerator::seeded(seed)),
            clock: Arc::new(SteppingClock::epoch()),
            config: StudioConfig::default(),
            instructions: Arc::new(Instructions::builtin()),
        }
    }

    pub fn create_session(
        &self,
        task_prompt: &str,
        sink: Option<Box<dyn EventSink>>,
    ) -> Result<Arc<SessionHandle>, StudioError> {
        if task_prompt.trim().is_empty() {
            return Err(StudioError::invalid("task prompt is empty"));
        }
        let log = SessionLog::create(
            self.ids.session(),
            task_prompt,
            self.ids.tab(),
            self.clock.now(),
            sink,
        )?;
        Ok(SessionHandle::new(log))
    }

    pub(crate) fn append(
        &self,
        session: &SessionHandle,
        kind: EventKind,
    ) -> Result<Event, StudioError> {
        let at = self.clock.now();
        Ok(session.with_log(|log| log.append(at, kind).cloned())?)
    }

    pub fn open_refine_tab(
        &self,
        session: &SessionHandle,
        image_id: &ImageId,
    ) -> Result<Tab, StudioError> {
        let tab_id = self.ids.tab();
        let at = self.clock.now();
        session.with_log(|log| {
            if log.session().image(image_id).is_none() {
                return Err(StudioError::not_found("image", image_id));
            }
            log.append(
                at,
                EventKind::RefineTabOpened {
                    tab_id: tab_id.clone(),
                    base_image_id: image_id.clone(),
                },
            )?;
            Ok(log.session().tab(&tab_id).cloned().expect("tab just opened"))
        })
    }

    /// Record that the user downloaded an image as a final result.
    pub fn mark_downloaded(
        &self,
        session: &SessionHandle,
        image_id: &ImageId,
    ) -> Result<ImageRecord, StudioError> {
        let at = self.clock.now();
        session.with_log(|log| {
            if log.session().image(image_id).is_none() {
                return Err(StudioError::not_found("image", image_id));
            }
            log.append(
                at,
                EventKind::ImageDownloaded {
                    image_id: image_id.clone(),
                },
            )?;
            Ok(log.session().image(image_id).cloned().expect("exists"))
        })
    }

    pub fn image_bytes(&self, record: &ImageRecord) -> Result<Vec<u8>, StudioError> {
        Ok(self.blobs.get(&record.bytes_ref)?)
    }
}
