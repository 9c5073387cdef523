//! Session state and the append-only event log it is folded from.
//!
//! Nothing mutates a [`Session`] directly: every change is an [`Event`], and
//! the state is `events.fold(None, apply_event)`. Behavioral metrics are
//! queries over the same log.

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::BlobRef;
use crate::ideation::{IdeaCard, IdeaPatch, IdeationMode, Provenance};
use crate::ids::{IdeaId, ImageId, RoundId, SessionId, SketchId, TabId};
use crate::refinement::RefinementRound;
use crate::sketch::{self, Selections, Sketch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Medium,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    FromIdea { idea_id: IdeaId },
    Variation { parent_image_id: ImageId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub origin: Origin,
    /// Exact prompt sent to the image provider.
    pub prompt_used: String,
    pub explanation: Option<String>,
    pub quality: Quality,
    pub tab_id: TabId,
    pub bytes_ref: BlobRef,
    pub downloaded: bool,
}

impl ImageRecord {
    pub fn parent(&self) -> Option<&ImageId> {
        match &self.origin {
            Origin::Variation { parent_image_id } => Some(parent_image_id),
            Origin::FromIdea { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TabKind {
    Brainstorm,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tab {
    pub tab_id: TabId,
    pub kind: TabKind,
    pub base_image_id: Option<ImageId>,
    pub current_sketch_id: Option<SketchId>,
    pub refine_prompt_history: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrainstormPrompt {
    pub prompt: String,
    pub mode: IdeationMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FailureTarget {
    Ideas,
    IdeaImage { idea_id: IdeaId },
    Sketch,
    Variation { round_id: RoundId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seq: u64,
    pub tab_id: TabId,
    pub target: FailureTarget,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub created_at: DateTime<Utc>,
    pub task_prompt: String,
    pub tabs: Vec<Tab>,
    pub images: IndexMap<ImageId, ImageRecord>,
    pub ideas: IndexMap<IdeaId, IdeaCard>,
    pub sketches: IndexMap<SketchId, Sketch>,
    pub rounds: Vec<RefinementRound>,
    pub brainstorm_prompts: Vec<BrainstormPrompt>,
    pub failures: Vec<FailureRecord>,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    SessionCreated {
        session_id: SessionId,
        task_prompt: String,
        brainstorm_tab_id: TabId,
    },
    BrainstormPrompted {
        prompt: String,
        mode: IdeationMode,
    },
    IdeasGenerated {
        ideas: Vec<IdeaCard>,
    },
    IdeaCreated {
        idea: IdeaCard,
    },
    IdeaEdited {
        idea_id: IdeaId,
        changes: IdeaPatch,
    },
    IdeaDeleted {
        idea_id: IdeaId,
    },
    IdeasExpanded {
        extra_context: Option<String>,
        ideas: Vec<IdeaCard>,
    },
    IdeaImageGenerated {
        image: ImageRecord,
    },
    RefineTabOpened {
        tab_id: TabId,
        base_image_id: ImageId,
    },
    RefinePrompted {
        tab_id: TabId,
        refine_prompt: String,
    },
    SketchSynthesized {
        tab_id: TabId,
        sketch: Sketch,
        /// Whether the base image pixels (not just its prompt) were sent.
        image_input_used: bool,
    },
    SelectionsApplied {
        tab_id: TabId,
        round_id: RoundId,
        sketch_id: SketchId,
        selections: Selections,
        prompt_manually_edited: bool,
        final_prompt: String,
        used_defaults: bool,
    },
    VariationGenerated {
        tab_id: TabId,
        round_id: RoundId,
        image: ImageRecord,
    },
    PromptManuallyEdited {
        tab_id: TabId,
        round_id: RoundId,
        text: String,
    },
    ImageDownloaded {
        image_id: ImageId,
    },
    GenerationFailed {
        tab_id: TabId,
        target: FailureTarget,
        error: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionCreated { .. } => "SessionCreated",
            EventKind::BrainstormPrompted { .. } => "BrainstormPrompted",
            EventKind::IdeasGenerated { .. } => "IdeasGenerated",
            EventKind::IdeaCreated { .. } => "IdeaCreated",
            EventKind::IdeaEdited { .. } => "IdeaEdited",
            EventKind::IdeaDeleted { .. } => "IdeaDeleted",
            EventKind::IdeasExpanded { .. } => "IdeasExpanded",
            EventKind::IdeaImageGenerated { .. } => "IdeaImageGenerated",
            EventKind::RefineTabOpened { .. } => "RefineTabOpened",
            EventKind::RefinePrompted { .. } => "RefinePrompted",
            EventKind::SketchSynthesized { .. } => "SketchSynthesized",
            EventKind::SelectionsApplied { .. } => "SelectionsApplied",
            EventKind::VariationGenerated { .. } => "VariationGenerated",
            EventKind::PromptManuallyEdited { .. } => "PromptManuallyEdited",
            EventKind::ImageDownloaded { .. } => "ImageDownloaded",
            EventKind::GenerationFailed { .. } => "GenerationFailed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("expected event seq {expected}, got {got}")]
    Sequence { expected: u64, got: u64 },
    #[error("integrity violation at seq {seq}: {detail}")]
    Integrity { seq: u64, detail: String },
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("failed to persist event {seq}: {detail}")]
    Storage { seq: u64, detail: String },
}

impl SessionError {
    pub fn not_found(kind: &'static str, id: impl ToString) -> Self {
        SessionError::NotFound {
            kind,
            id: id.to_string(),
        }
    }
}

impl Session {
    pub fn brainstorm_tab(&self) -> &Tab {
        &self.tabs[0]
    }

    pub fn tab(&self, id: &TabId) -> Option<&Tab> {
        self.tabs.iter().find(|t| &t.tab_id == id)
    }

    fn tab_mut(&mut self, id: &TabId) -> Option<&mut Tab> {
        self.tabs.iter_mut().find(|t| &t.tab_id == id)
    }

    pub fn image(&self, id: &ImageId) -> Option<&ImageRecord> {
        self.images.get(id)
    }

    pub fn idea(&self, id: &IdeaId) -> Option<&IdeaCard> {
        self.ideas.get(id)
    }

    pub fn sketch(&self, id: &SketchId) -> Option<&Sketch> {
        self.sketches.get(id)
    }

    pub fn round(&self, id: &RoundId) -> Option<&RefinementRound> {
        self.rounds.iter().find(|r| &r.round_id == id)
    }

    pub fn has_brainstormed(&self) -> bool {
        !self.brainstorm_prompts.is_empty()
    }

    /// Base image first, then its variations, as shown in a tab's library.
    pub fn tab_library(&self, tab_id: &TabId) -> Vec<&ImageRecord> {
        let Some(tab) = self.tab(tab_id) else {
            return Vec::new();
        };
        match &tab.base_image_id {
            None => self
                .images
                .values()
                .filter(|i| &i.tab_id == tab_id)
                .collect(),
            Some(base) => self
                .images
                .get(base)
                .into_iter()
                .chain(self.images.values().filter(|i| &i.tab_id == tab_id))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCluster {
    pub root: ImageId,
    /// Root first, then descendants in creation order.
    pub members: Vec<ImageId>,
}

/// Group images by the idea-image they descend from.
pub fn image_clusters(session: &Session) -> Vec<ImageCluster> {
    let mut root_of: IndexMap<&ImageId, &ImageId> = IndexMap::new();
    let mut clusters: IndexMap<&ImageId, Vec<ImageId>> = IndexMap::new();
    // parents always precede children in `images`, so one pass suffices
    for (id, image) in &session.images {
        let root = match image.parent() {
            None => id,
            Some(parent) => root_of[parent],
        };
        root_of.insert(id, root);
        clusters.entry(root).or_default().push(id.clone());
    }
    clusters
        .into_iter()
        .map(|(root, members)| ImageCluster {
            root: root.clone(),
            members,
        })
        .collect()
}

fn integrity(seq: u64, detail: impl Into<String>) -> SessionError {
    SessionError::Integrity {
        seq,
        detail: detail.into(),
    }
}

/// Fold one event into the state. `None` is the empty state before
/// `SessionCreated`.
pub fn apply_event(state: Option<Session>, event: &Event) -> Result<Session, SessionError> {
    let seq = event.seq;
    let expected = state.as_ref().map_or(1, |s| s.last_seq + 1);
    if seq != expected {
        return Err(SessionError::Sequence { expected, got: seq });
    }
    let mut s = match (state, &event.kind) {
        (
            None,
            EventKind::SessionCreated {
                session_id,
                task_prompt,
                brainstorm_tab_id,
            },
        ) => {
            return Ok(Session {
                session_id: session_id.clone(),
                created_at: event.at,
                task_prompt: task_prompt.clone(),
                tabs: vec![Tab {
                    tab_id: brainstorm_tab_id.clone(),
                    kind: TabKind::Brainstorm,
                    base_image_id: None,
                    current_sketch_id: None,
                    refine_prompt_history: Vec::new(),
                }],
                images: IndexMap::new(),
                ideas: IndexMap::new(),
                sketches: IndexMap::new(),
                rounds: Vec::new(),
                brainstorm_prompts: Vec::new(),
                failures: Vec::new(),
                last_seq: seq,
            })
        }
        (None, other) => {
            return Err(integrity(
                seq,
                format!("{} before SessionCreated", other.name()),
            ))
        }
        (Some(_), EventKind::SessionCreated { .. }) => {
            return Err(integrity(seq, "session already created"))
        }
        (Some(s), _) => s,
    };

    match &event.kind {
        EventKind::SessionCreated { .. } => unreachable!(),
        EventKind::BrainstormPrompted { prompt, mode } => {
            s.brainstorm_prompts.push(BrainstormPrompt {
                prompt: prompt.clone(),
                mode: *mode,
            });
        }
        EventKind::IdeasGenerated { ideas } | EventKind::IdeasExpanded { ideas, .. } => {
            if !s.has_brainstormed() {
                return Err(integrity(seq, "ideas generated before any brainstorm prompt"));
            }
            for idea in ideas {
                if idea.provenance != Provenance::ModelGenerated {
                    return Err(integrity(seq, "generated idea must be ModelGenerated"));
                }
                insert_idea(&mut s, seq, idea)?;
            }
        }
        EventKind::IdeaCreated { idea } => {
            if idea.provenance != Provenance::UserCreated {
                return Err(integrity(seq, "created idea must be UserCreated"));
            }
            insert_idea(&mut s, seq, idea)?;
        }
        EventKind::IdeaEdited { idea_id, changes } => {
            let card = s
                .ideas
                .get_mut(idea_id)
                .ok_or_else(|| integrity(seq, format!("unknown idea {idea_id}")))?;
            let edited = card.with_patch(changes);
            edited
                .validate()
                .map_err(|e| integrity(seq, format!("edited idea invalid: {e}")))?;
            *card = edited;
        }
        EventKind::IdeaDeleted { idea_id } => {
            s.ideas
                .shift_remove(idea_id)
                .ok_or_else(|| integrity(seq, format!("unknown idea {idea_id}")))?;
        }
        EventKind::IdeaImageGenerated { image } => {
            let Origin::FromIdea { idea_id } = &image.origin else {
                return Err(integrity(seq, "idea image must have FromIdea origin"));
            };
            if !s.ideas.contains_key(idea_id) {
                return Err(integrity(seq, format!("unknown idea {idea_id}")));
            }
            if image.tab_id != s.brainstorm_tab().tab_id {
                return Err(integrity(seq, "idea images belong to the brainstorm tab"));
            }
            insert_image(&mut s, seq, image)?;
        }
        EventKind::RefineTabOpened {
            tab_id,
            base_image_id,
        } => {
            if s.tab(tab_id).is_some() {
                return Err(integrity(seq, format!("duplicate tab {tab_id}")));
            }
            if !s.images.contains_key(base_image_id) {
                return Err(integrity(seq, format!("unknown image {base_image_id}")));
            }
            s.tabs.push(Tab {
                tab_id: tab_id.clone(),
                kind: TabKind::Refine,
                base_image_id: Some(base_image_id.clone()),
                current_sketch_id: None,
                refine_prompt_history: Vec::new(),
            });
        }
        EventKind::RefinePrompted {
            tab_id,
            refine_prompt,
        } => {
            if refine_prompt.trim().is_empty() {
                return Err(integrity(seq, "empty refine prompt"));
            }
            refine_tab_mut(&mut s, seq, tab_id)?
                .refine_prompt_history
                .push(refine_prompt.clone());
        }
        EventKind::SketchSynthesized { tab_id, sketch, .. } => {
            refine_tab_mut(&mut s, seq, tab_id)?;
            match s.sketches.get(sketch.id()) {
                Some(existing) if existing != sketch => {
                    return Err(integrity(seq, format!("sketch id {} reused", sketch.id())))
                }
                Some(_) => {}
                None => {
                    s.sketches.insert(sketch.id().clone(), sketch.clone());
                }
            }
            refine_tab_mut(&mut s, seq, tab_id)?.current_sketch_id = Some(sketch.id().clone());
        }
        EventKind::PromptManuallyEdited { tab_id, text, .. } => {
            refine_tab_mut(&mut s, seq, tab_id)?;
            if text.trim().is_empty() {
                return Err(integrity(seq, "empty manual prompt"));
            }
        }
        EventKind::SelectionsApplied {
            tab_id,
            round_id,
            sketch_id,
            selections,
            prompt_manually_edited,
            final_prompt,
            used_defaults,
        } => {
            let tab = refine_tab_mut(&mut s, seq, tab_id)?;
            if tab.current_sketch_id.as_ref() != Some(sketch_id) {
                return Err(integrity(seq, "selections applied to a sketch that is not current"));
            }
            let refine_prompt = tab.refine_prompt_history.last().cloned().unwrap_or_default();
            if s.round(round_id).is_some() {
                return Err(integrity(seq, format!("duplicate round {round_id}")));
            }
            let sketch = &s.sketches[sketch_id];
            let rendered = sketch::render(sketch, selections)
                .map_err(|e| integrity(seq, format!("invalid selections: {e}")))?;
            if !prompt_manually_edited && &rendered.text != final_prompt {
                return Err(integrity(seq, "final prompt does not match the rendered sketch"));
            }
            let expected_defaults = selections.all_first_options() && !prompt_manually_edited;
            if *used_defaults != expected_defaults {
                return Err(integrity(seq, "used_defaults flag inconsistent with selections"));
            }
            s.rounds.push(RefinementRound {
                round_id: round_id.clone(),
                tab_id: tab_id.clone(),
                refine_prompt,
                sketch_id: sketch_id.clone(),
                selections_used: selections.clone(),
                prompt_manually_edited: *prompt_manually_edited,
                final_prompt: final_prompt.clone(),
                result_image_id: None,
                failure: None,
            });
        }
        EventKind::VariationGenerated {
            tab_id,
            round_id,
            image,
        } => {
            let base = refine_tab_mut(&mut s, seq, tab_id)?.base_image_id.clone();
            let round = s
                .rounds
                .iter()
                .find(|r| &r.round_id == round_id)
                .ok_or_else(|| integrity(seq, format!("unknown round {round_id}")))?;
            if &round.tab_id != tab_id || round.result_image_id.is_some() || round.failure.is_some()
            {
                return Err(integrity(seq, format!("round {round_id} cannot take a result")));
            }
            if image.prompt_used != round.final_prompt {
                return Err(integrity(seq, "variation prompt differs from the round's final prompt"));
            }
            if image.parent() != base.as_ref() {
                return Err(integrity(seq, "variation must be anchored on the tab's base image"));
            }
            if &image.tab_id != tab_id {
                return Err(integrity(seq, "variation tab mismatch"));
            }
            insert_image(&mut s, seq, image)?;
            let round = s
                .rounds
                .iter_mut()
                .find(|r| &r.round_id == round_id)
                .expect("checked above");
            round.result_image_id = Some(image.image_id.clone());
        }
        EventKind::ImageDownloaded { image_id } => {
            s.images
                .get_mut(image_id)
                .ok_or_else(|| integrity(seq, format!("unknown image {image_id}")))?
                .downloaded = true;
        }
        EventKind::GenerationFailed {
            tab_id,
            target,
            error,
        } => {
            if s.tab(tab_id).is_none() {
                return Err(integrity(seq, format!("unknown tab {tab_id}")));
            }
            if let FailureTarget::Variation { round_id } = target {
                let round = s
                    .rounds
                    .iter_mut()
                    .find(|r| &r.round_id == round_id)
                    .ok_or_else(|| integrity(seq, format!("unknown round {round_id}")))?;
                if round.result_image_id.is_some() {
                    return Err(integrity(seq, format!("round {round_id} already has a result")));
                }
                round.failure = Some(error.clone());
            }
            s.failures.push(FailureRecord {
                seq,
                tab_id: tab_id.clone(),
                target: target.clone(),
                error: error.clone(),
            });
        }
    }
    s.last_seq = seq;
    Ok(s)
}

fn insert_idea(s: &mut Session, seq: u64, idea: &IdeaCard) -> Result<(), SessionError> {
    idea.validate()
        .map_err(|e| integrity(seq, format!("invalid idea: {e}")))?;
    if s.ideas.contains_key(&idea.idea_id) {
        return Err(integrity(seq, format!("duplicate idea {}", idea.idea_id)));
    }
    s.ideas.insert(idea.idea_id.clone(), idea.clone());
    Ok(())
}

fn insert_image(s: &mut Session, seq: u64, image: &ImageRecord) -> Result<(), SessionError> {
    if s.images.contains_key(&image.image_id) {
        return Err(integrity(seq, format!("duplicate image {}", image.image_id)));
    }
    if let Some(parent) = image.parent() {
        if !s.images.contains_key(parent) {
            return Err(integrity(seq, format!("unknown parent image {parent}")));
        }
    }
    if image.downloaded {
        return Err(integrity(seq, "new image cannot already be downloaded"));
    }
    s.images.insert(image.image_id.clone(), image.clone());
    Ok(())
}

fn refine_tab_mut<'a>(
    s: &'a mut Session,
    seq: u64,
    tab_id: &TabId,
) -> Result<&'a mut Tab, SessionError> {
    let tab = s
        .tab_mut(tab_id)
        .ok_or_else(|| integrity(seq, format!("unknown tab {tab_id}")))?;
    if tab.kind != TabKind::Refine {
        return Err(integrity(seq, format!("tab {tab_id} is not a refine tab")));
    }
    Ok(tab)
}

/// Fold a whole log.
pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Session, SessionError> {
    let mut state = None;
    for e in events {
        state = Some(apply_event(state, e)?);
    }
    state.ok_or_else(|| SessionError::Invalid("empty event log".into()))
}

/// Durable destination for events; called before an event is acknowledged.
pub trait EventSink: Send {
    fn persist(&mut self, event: &Event) -> std::io::Result<()>;
}

/// A session plus the log it was folded from.
pub struct SessionLog {
    session: Session,
    events: Vec<Event>,
    sink: Option<Box<dyn EventSink>>,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog")
            .field("session_id", &self.session.session_id)
            .field("events", &self.events.len())
            .finish()
    }
}

impl SessionLog {
    pub fn create(
        session_id: SessionId,
        task_prompt: impl Into<String>,
        brainstorm_tab_id: TabId,
        at: DateTime<Utc>,
        sink: Option<Box<dyn EventSink>>,
    ) -> Result<Self, SessionError> {
        let event = Event {
            seq: 1,
            at,
            kind: EventKind::SessionCreated {
                session_id,
                task_prompt: task_prompt.into(),
                brainstorm_tab_id,
            },
        };
        let session = apply_event(None, &event)?;
        let mut sink = sink;
        if let Some(sink) = sink.as_mut() {
            sink.persist(&event).map_err(|e| SessionError::Storage {
                seq: 1,
                detail: e.to_string(),
            })?;
        }
        Ok(Self {
            session,
            events: vec![event],
            sink,
        })
    }

    pub fn from_events(events: Vec<Event>) -> Result<Self, SessionError> {
        let session = replay(&events)?;
        Ok(Self {
            session,
            events,
            sink: None,
        })
    }

    pub fn set_sink(&mut self, sink: Box<dyn EventSink>) {
        self.sink = Some(sink);
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Validate, persist, then commit. On any error the state is unchanged.
    pub fn append(&mut self, at: DateTime<Utc>, kind: EventKind) -> Result<&Event, SessionError> {
        let event = Event {
            seq: self.session.last_seq + 1,
            at,
            kind,
        };
        let next = apply_event(Some(self.session.clone()), &event)?;
        if let Some(sink) = self.sink.as_mut() {
            sink.persist(&event).map_err(|e| SessionError::Storage {
                seq: event.seq,
                detail: e.to_string(),
            })?;
        }
        self.session = next;
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Event log as JSON Lines.
    pub fn export_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }
}

pub fn events_to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
#[error("line {line}: {source}")]
pub struct JsonlError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<Event>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| JsonlError { line: i + 1, source }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideation::IdeaCard;
    use chrono::TimeZone;

    fn at(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
    }

    fn idea(id: &str) -> IdeaCard {
        IdeaCard {
            idea_id: id.into(),
            title: format!("Idea {id}"),
            background: "bg".into(),
            description: "desc".into(),
            categories: vec!["meme".into()],
            visual_ref: None,
            provenance: Provenance::ModelGenerated,
        }
    }

    fn image(id: &str, origin: Origin, tab: &str, quality: Quality) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            origin,
            prompt_used: format!("prompt for {id}"),
            explanation: None,
            quality,
            tab_id: tab.into(),
            bytes_ref: BlobRef::new(format!("sha256:{id}")),
            downloaded: false,
        }
    }

    fn from_idea(id: &str, idea: &str) -> ImageRecord {
        image(
            id,
            Origin::FromIdea {
                idea_id: idea.into(),
            },
            "tab_b",
            Quality::Medium,
        )
    }

    fn base_log() -> SessionLog {
        let mut log = SessionLog::create(
            "ses_1".into(),
            "poster about phones",
            "tab_b".into(),
            at(0),
            None,
        )
        .unwrap();
        log.append(
            at(1),
            EventKind::BrainstormPrompted {
                prompt: "poster about phones".into(),
                mode: IdeationMode::Associative,
            },
        )
        .unwrap();
        log.append(
            at(2),
            EventKind::IdeasGenerated {
                ideas: vec![idea("i1"), idea("i2")],
            },
        )
        .unwrap();
        log
    }

    #[test]
    fn session_created_gives_one_brainstorm_tab() {
        let log = SessionLog::create("s".into(), "goal", "t".into(), at(0), None).unwrap();
        assert_eq!(log.session().tabs.len(), 1);
        assert_eq!(log.session().tabs[0].kind, TabKind::Brainstorm);
        assert!(log.session().tabs[0].base_image_id.is_none());
    }

    #[test]
    fn sequence_gaps_and_duplicates_rejected() {
        let log = base_log();
        let s = log.session().clone();
        let gap = Event {
            seq: s.last_seq + 2,
            at: at(9),
            kind: EventKind::IdeaDeleted {
                idea_id: "i1".into(),
            },
        };
        assert_eq!(
            apply_event(Some(s.clone()), &gap).unwrap_err(),
            SessionError::Sequence {
                expected: 4,
                got: 5
            }
        );
        let dup = Event { seq: 3, ..gap };
        assert!(matches!(
            apply_event(Some(s), &dup),
            Err(SessionError::Sequence { .. })
        ));
    }

    #[test]
    fn unknown_ids_are_integrity_errors() {
        let mut log = base_log();
        let err = log
            .append(
                at(3),
                EventKind::RefineTabOpened {
                    tab_id: "tab_r".into(),
                    base_image_id: "img_missing".into(),
                },
            )
            .unwrap_err();
        assert!(matches!(err, SessionError::Integrity { seq: 4, .. }));
        // state unchanged
        assert_eq!(log.session().last_seq, 3);
        assert_eq!(log.session().tabs.len(), 1);
    }

    #[test]
    fn refine_tab_opened_appends_refine_tab() {
        let mut log = base_log();
        log.append(
            at(3),
            EventKind::IdeaImageGenerated {
                image: from_idea("img1", "i1"),
            },
        )
        .unwrap();
        log.append(
            at(4),
            EventKind::RefineTabOpened {
                tab_id: "tab_r".into(),
                base_image_id: "img1".into(),
            },
        )
        .unwrap();
        let s = log.session();
        assert_eq!(s.tabs.len(), 2);
        assert_eq!(s.tabs[1].kind, TabKind::Refine);
        assert_eq!(s.tabs[1].base_image_id.as_ref().unwrap().as_str(), "img1");
        assert_eq!(s.tabs[0].kind, TabKind::Brainstorm);
        assert_eq!(s.tabs[0].base_image_id, None);
    }

    #[test]
    fn deleting_an_idea_keeps_its_images() {
        let mut log = base_log();
        log.append(
            at(3),
            EventKind::IdeaImageGenerated {
                image: from_idea("img1", "i1"),
            },
        )
        .unwrap();
        log.append(
            at(4),
            EventKind::IdeaDeleted {
                idea_id: "i1".into(),
            },
        )
        .unwrap();
        assert!(log.session().idea(&"i1".into()).is_none());
        assert!(log.session().image(&"img1".into()).is_some());
        assert_eq!(image_clusters(log.session()).len(), 1);
    }

    #[test]
    fn clusters_examples() {
        let mut log = base_log();
        assert!(image_clusters(log.session()).is_empty());
        log.append(at(3), EventKind::IdeaImageGenerated { image: from_idea("a", "i1") })
            .unwrap();
        log.append(at(4), EventKind::IdeaImageGenerated { image: from_idea("b", "i2") })
            .unwrap();
        // variations are inserted directly into state here; the
        // refinement flow is covered by its own tests
        let mut s = log.session().clone();
        for (id, parent) in [("a1", "a"), ("a2", "a"), ("a3", "a1")] {
            let img = image(
                id,
                Origin::Variation {
                    parent_image_id: parent.into(),
                },
                "tab_r",
                Quality::Auto,
            );
            insert_image(&mut s, 0, &img).unwrap();
        }
        let clusters = image_clusters(&s);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members.len(), 4);
        assert_eq!(clusters[1].members.len(), 1);
    }

    #[test]
    fn event_wire_shape() {
        let log = base_log();
        let raw = serde_json::to_string(&log.events()[1]).unwrap();
        let pos: Vec<usize> = ["\"seq\"", "\"at\"", "\"kind\"", "\"payload\""]
            .iter()
            .map(|k| raw.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{raw}");
        let line: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert_eq!(line.as_object().unwrap().len(), 4);
        assert_eq!(line["kind"], "BrainstormPrompted");
        let text = log.export_jsonl();
        assert_eq!(text.lines().count(), 3);
        let back = events_from_jsonl(&text).unwrap();
        assert_eq!(back, log.events());
        // RFC 3339
        assert!(DateTime::parse_from_rfc3339(line["at"].as_str().unwrap()).is_ok());
    }

    struct FailingSink;
    impl EventSink for FailingSink {
        fn persist(&mut self, _: &Event) -> std::io::Result<()> {
            Err(std::io::Error::other("disk full"))
        }
    }

    #[test]
    fn failed_persist_does_not_commit() {
        let mut log = base_log();
        log.set_sink(Box::new(FailingSink));
        let err = log
            .append(at(3), EventKind::IdeaDeleted { idea_id: "i1".into() })
            .unwrap_err();
        assert!(matches!(err, SessionError::Storage { seq: 4, .. }));
        assert_eq!(log.events().len(), 3);
        assert!(log.session().idea(&"i1".into()).is_some());
    }
}
