//! Brainstorming: idea cards, the ideation instruction, response parsing,
//! thumbnail sheets and spark-to-image generation.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::blob::BlobRef;
use crate::ids::{IdGenerator, IdeaId};
use crate::instructions::{fill, Instructions};
use crate::providers::{ImageModel, ImageRequest, TextRequest, TextTask};
use crate::session::{EventKind, FailureTarget, ImageRecord, Origin};
use crate::structured::{generate_with_repair, StructuredError};
use crate::studio::{SessionHandle, Studio, StudioError};
use crate::tiling::slice_grid;

pub use crate::tiling::{bands, stitch, GridError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ModelGenerated,
    UserCreated,
    UserEdited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaCard {
    pub idea_id: IdeaId,
    pub title: String,
    /// Context shown on hover.
    pub background: String,
    pub description: String,
    pub categories: Vec<String>,
    pub visual_ref: Option<BlobRef>,
    pub provenance: Provenance,
}

/// Field changes from the edit dialog; `None` leaves a field as is.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl IdeaPatch {
    pub fn is_empty(&self) -> bool {
        self.title.is_none()
            && self.background.is_none()
            && self.description.is_none()
            && self.categories.is_none()
    }
}

impl IdeaCard {
    pub fn validate(&self) -> Result<(), String> {
        if self.title.trim().is_empty() {
            return Err("title is empty".into());
        }
        if self.description.trim().is_empty() {
            return Err("description is empty".into());
        }
        if self.provenance == Provenance::ModelGenerated && self.categories.is_empty() {
            return Err("generated idea has no categories".into());
        }
        Ok(())
    }

    pub fn with_patch(&self, patch: &IdeaPatch) -> IdeaCard {
        let mut next = self.clone();
        if let Some(t) = &patch.title {
            next.title = t.clone();
        }
        if let Some(b) = &patch.background {
            next.background = b.clone();
        }
        if let Some(d) = &patch.description {
            next.description = d.clone();
        }
        if let Some(c) = &patch.categories {
            next.categories = c.clone();
        }
        if next.provenance == Provenance::ModelGenerated {
            next.provenance = Provenance::UserEdited;
        }
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdeationMode {
    /// Production mode: ideas drawn from remote associations.
    Associative,
    /// Ablation baseline: diverse ideas with no mention of association.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdeationRequest {
    pub user_prompt: String,
    pub count: usize,
    pub extra_context: Option<String>,
    pub existing_titles: Vec<String>,
    pub mode: IdeationMode,
    /// Independent-sample index for repeated runs.
    pub sample: u32,
}

impl IdeationRequest {
    pub fn new(user_prompt: impl Into<String>, mode: IdeationMode) -> Self {
        Self {
            user_prompt: user_prompt.into(),
            count: 9,
            extra_context: None,
            existing_titles: Vec::new(),
            mode,
            sample: 0,
        }
    }
}

/// Terms that signal associative prompting; plain-mode instructions must
/// contain none of them (matched case-insensitively as substrings).
pub const ASSOCIATION_DENY_LIST: &[&str] = &[
    "associat",
    "artwork",
    "historical event",
    "mytholog",
    "metaphor",
    "remote",
    "unrelated",
    "various domains",
    "cross-domain",
];

/// The example source domains associative instructions must name.
pub const SOURCE_DOMAINS: &[&str] = &["artworks", "historical events", "mythology", "metaphors"];

pub fn idea_schema() -> Value {
    serde_json::json!({
        "type": "object",
        "required": ["ideas"],
        "properties": {
            "ideas": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["title", "background", "description", "categories"],
                    "properties": {
                        "title": {"type": "string"},
                        "background": {"type": "string"},
                        "description": {"type": "string"},
                        "categories": {"type": "array", "items": {"type": "string"}}
                    }
                }
            }
        }
    })
}

pub fn build_ideation_instruction(req: &IdeationRequest, texts: &Instructions) -> TextRequest {
    let t = &texts.ideation;
    let count = req.count.to_string();
    let mut parts = vec![
        match req.mode {
            IdeationMode::Associative => t.associative.clone(),
            IdeationMode::Plain => t.plain.clone(),
        },
        fill(
            &t.task,
            &[("user_prompt", &req.user_prompt), ("count", &count)],
        ),
    ];
    if let Some(ctx) = req.extra_context.as_deref().filter(|c| !c.trim().is_empty()) {
        parts.push(fill(&t.context, &[("extra_context", ctx)]));
    }
    if !req.existing_titles.is_empty() {
        let titles = req
            .existing_titles
            .iter()
            .map(|t| format!("- {t}"))
            .collect::<Vec<_>>()
            .join("\n");
        parts.push(fill(&t.exclusions, &[("titles", &titles)]));
    }
    parts.push(fill(&t.format, &[]));
    let mut request = TextRequest::new(TextTask::Ideation, t.system.clone(), parts.join("\n\n"))
        .input("user_prompt", &req.user_prompt)
        .input("count", req.count)
        .input("mode", req.mode)
        .input("existing_titles", &req.existing_titles)
        .input("extra_context", req.extra_context.as_deref().unwrap_or_default());
    request.schema = Some(idea_schema());
    request.sample = req.sample;
    request
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SchemaError {
    #[error("response is not valid JSON: {detail}")]
    NotJson { detail: String },
    #[error("response has the wrong shape: {detail}")]
    Shape { detail: String },
    #[error("expected {expected} ideas, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("idea {index}: field `{field}` {problem}")]
    Field {
        index: usize,
        field: String,
        problem: String,
    },
    #[error("idea {index}: title `{title}` duplicates an existing idea")]
    DuplicateTitle { index: usize, title: String },
}

/// Validate a provider response into exactly `expected_count` cards. The
/// result is all-or-nothing.
pub fn parse_ideas(
    response: &str,
    expected_count: usize,
    existing_titles: &[String],
    ids: &IdGenerator,
) -> Result<Vec<IdeaCard>, SchemaError> {
    let v: Value = serde_json::from_str(response.trim()).map_err(|e| SchemaError::NotJson {
        detail: e.to_string(),
    })?;
    let items = v
        .get("ideas")
        .and_then(Value::as_array)
        .ok_or_else(|| SchemaError::Shape {
            detail: "expected an object with an `ideas` array".into(),
        })?;
    if items.len() != expected_count {
        return Err(SchemaError::WrongCount {
            expected: expected_count,
            got: items.len(),
        });
    }
    let mut titles: BTreeSet<&str> = existing_titles.iter().map(String::as_str).collect();
    let mut drafts = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let field = |name: &str, problem: &str| SchemaError::Field {
            index,
            field: name.to_string(),
            problem: problem.to_string(),
        };
        let text = |name: &str, required: bool| -> Result<String, SchemaError> {
            match item.get(name) {
                None | Some(Value::Null) => Err(field(name, "is missing")),
                Some(Value::String(s)) if required && s.trim().is_empty() => {
                    Err(field(name, "is empty"))
                }
                Some(Value::String(s)) => Ok(s.trim().to_string()),
                Some(_) => Err(field(name, "is not a string")),
            }
        };
        let title = text("title", true)?;
        let background = text("background", false)?;
        let description = text("description", true)?;
        let categories = match item.get("categories") {
            None | Some(Value::Null) => return Err(field("categories", "is missing")),
            Some(Value::Array(a)) => a
                .iter()
                .map(|c| {
                    c.as_str()
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| field("categories", "contains a non-string or empty tag"))
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(field("categories", "is not an array")),
        };
        if categories.is_empty() {
            return Err(field("categories", "is empty"));
        }
        drafts.push((title, background, description, categories));
    }
    for (index, (title, ..)) in drafts.iter().enumerate() {
        if !titles.insert(title.as_str()) {
            return Err(SchemaError::DuplicateTitle {
                index,
                title: title.clone(),
            });
        }
    }
    Ok(drafts
        .into_iter()
        .map(|(title, background, description, categories)| IdeaCard {
            idea_id: ids.idea(),
            title,
            background,
            description,
            categories,
            visual_ref: None,
            provenance: Provenance::ModelGenerated,
        })
        .collect())
}

/// User input for "Create your own idea".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewIdea {
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub background: String,
    #[serde(default)]
    pub categories: Vec<String>,
}

impl Studio {
    /// Ask for ideas with one repair round.
    pub fn request_ideas(&self, req: &IdeationRequest) -> Result<Vec<IdeaCard>, StudioError> {
        let instruction = build_ideation_instruction(req, &self.instructions);
        generate_with_repair(
            self.providers.text.as_ref(),
            &self.instructions,
            &instruction,
            |raw| parse_ideas(raw, req.count, &req.existing_titles, &self.ids),
        )
        .map_err(|e| match e {
            StructuredError::Provider(p) => StudioError::Provider(p),
            StructuredError::Rejected { last, .. } => StudioError::Schema(last),
        })
    }

    /// Generate the thumbnail sheet for `ideas`, slice it and attach one
    /// tile per card. Thumbnails are cosmetic, so failures are logged and
    /// the cards are left without visuals.
    fn attach_thumbnails(&self, task_prompt: &str, ideas: &mut [IdeaCard]) {
        if ideas.is_empty() {
            return;
        }
        let cols = self.config.grid_cols.max(1);
        let rows = (ideas.len() as u32).div_ceil(cols);
        let items = ideas
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}: {}", i + 1, c.title, c.description))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = fill(
            &self.instructions.thumbnail.prompt,
            &[
                ("rows", &rows.to_string()),
                ("cols", &cols.to_string()),
                ("task_prompt", task_prompt),
                ("items", &items),
            ],
        );
        let req = ImageRequest {
            prompt,
            quality: self.config.idea_image_quality,
            model: ImageModel::Thumbnail,
            grid: Some((rows, cols)),
        };
        let result = self
            .providers
            .image
            .generate(&req)
            .map_err(StudioError::from)
            .and_then(|png| Ok(slice_grid(&png, rows, cols)?));
        let tiles = match result {
            Ok(t) => t,
            Err(e) => {
                log::warn!("thumbnail sheet unavailable: {e}");
                return;
            }
        };
        for (card, tile) in ideas.iter_mut().zip(tiles) {
            let png = crate::providers::mock::encode_png(&tile, &[]);
            match self.blobs.put(&png) {
                Ok(r) => card.visual_ref = Some(r),
                Err(e) => log::warn!("storing thumbnail failed: {e}"),
            }
        }
    }

    /// Populate the idea grid from a prompt (defaults to the task prompt).
    pub fn brainstorm(
        &self,
        session: &SessionHandle,
        prompt: Option<&str>,
        count: Option<usize>,
    ) -> Result<Vec<IdeaCard>, StudioError> {
        let _serial = session.ideation_lock();
        let (task_prompt, tab_id, existing) = session.read(|s| {
            (
                s.task_prompt.clone(),
                s.brainstorm_tab().tab_id.clone(),
                s.ideas.values().map(|c| c.title.clone()).collect::<Vec<_>>(),
            )
        });
        let prompt = prompt
            .filter(|p| !p.trim().is_empty())
            .unwrap_or(&task_prompt)
            .to_string();
        self.append(
            session,
            EventKind::BrainstormPrompted {
                prompt: prompt.clone(),
                mode: self.config.mode,
            },
        )?;
        let req = IdeationRequest {
            count: count.unwrap_or(self.config.ideas_per_request).max(1),
            existing_titles: existing,
            ..IdeationRequest::new(prompt, self.config.mode)
        };
        let mut ideas = match self.request_ideas(&req) {
            Ok(i) => i,
            Err(e) => return Err(self.record_failure(session, tab_id, FailureTarget::Ideas, e)),
        };
        self.attach_thumbnails(&task_prompt, &mut ideas);
        self.append(
            session,
            EventKind::IdeasGenerated {
                ideas: ideas.clone(),
            },
        )?;
        Ok(ideas)
    }

    /// "More Ideas": append new cards, excluding existing titles.
    pub fn expand_ideas(
        &self,
        session: &SessionHandle,
        extra_context: Option<&str>,
        count: Option<usize>,
    ) -> Result<Vec<IdeaCard>, StudioError> {
        let _serial = session.ideation_lock();
        let (task_prompt, tab_id, last_prompt, existing) = session.read(|s| {
            (
                s.task_prompt.clone(),
                s.brainstorm_tab().tab_id.clone(),
                s.brainstorm_prompts.last().cloned(),
                s.ideas.values().map(|c| c.title.clone()).collect::<Vec<_>>(),
            )
        });
        let last = last_prompt
            .ok_or_else(|| StudioError::invalid("brainstorm before asking for more ideas"))?;
        let extra_context = extra_context
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string);
        let req = IdeationRequest {
            count: count.unwrap_or(self.config.ideas_per_request).max(1),
            extra_context: extra_context.clone(),
            existing_titles: existing,
            ..IdeationRequest::new(last.prompt, last.mode)
        };
        let mut ideas = match self.request_ideas(&req) {
            Ok(i) => i,
            Err(e) => return Err(self.record_failure(session, tab_id, FailureTarget::Ideas, e)),
        };
        self.attach_thumbnails(&task_prompt, &mut ideas);
        self.append(
            session,
            EventKind::IdeasExpanded {
                extra_context,
                ideas: ideas.clone(),
            },
        )?;
        Ok(ideas)
    }

    pub fn create_idea(
        &self,
        session: &SessionHandle,
        new: NewIdea,
    ) -> Result<IdeaCard, StudioError> {
        let card = IdeaCard {
            idea_id: self.ids.idea(),
            title: new.title.trim().to_string(),
            background: new.background.trim().to_string(),
            description: new.description.trim().to_string(),
            categories: new.categories,
            visual_ref: None,
            provenance: Provenance::UserCreated,
        };
        card.validate().map_err(StudioError::invalid)?;
        self.append(session, EventKind::IdeaCreated { idea: card.clone() })?;
        Ok(card)
    }

    pub fn edit_idea(
        &self,
        session: &SessionHandle,
        idea_id: &IdeaId,
        patch: IdeaPatch,
    ) -> Result<IdeaCard, StudioError> {
        if patch.is_empty() {
            return Err(StudioError::invalid("edit changes nothing"));
        }
        let at = self.clock.now();
        session.with_log(|log| {
            let current = log
                .session()
                .idea(idea_id)
                .ok_or_else(|| StudioError::not_found("idea", idea_id))?;
            current
                .with_patch(&patch)
                .validate()
                .map_err(StudioError::invalid)?;
            log.append(
                at,
                EventKind::IdeaEdited {
                    idea_id: idea_id.clone(),
                    changes: patch,
                },
            )?;
            Ok(log.session().idea(idea_id).cloned().expect("exists"))
        })
    }

    pub fn delete_idea(&self, session: &SessionHandle, idea_id: &IdeaId) -> Result<(), StudioError> {
        let at = self.clock.now();
        session.with_log(|log| {
            if log.session().idea(idea_id).is_none() {
                return Err(StudioError::not_found("idea", idea_id));
            }
            log.append(
                at,
                EventKind::IdeaDeleted {
                    idea_id: idea_id.clone(),
                },
            )?;
            Ok(())
        })
    }

    /// Spark: generate a full image and its explanation from one idea.
    pub fn generate_idea_image(
        &self,
        session: &SessionHandle,
        idea_id: &IdeaId,
    ) -> Result<ImageRecord, StudioError> {
        let (idea, task_prompt, tab_id) = session.read(|s| {
            s.idea(idea_id)
                .cloned()
                .map(|i| (i, s.task_prompt.clone(), s.brainstorm_tab().tab_id.clone()))
                .ok_or_else(|| StudioError::not_found("idea", idea_id))
        })?;
        let prompt = fill(
            &self.instructions.idea_image.prompt,
            &[
                ("task_prompt", &task_prompt),
                ("title", &idea.title),
                ("description", &idea.description),
                ("background", &idea.background),
            ],
        );
        let quality = self.config.idea_image_quality;
        let generated = self
            .providers
            .image
            .generate(&ImageRequest::new(prompt.clone(), quality))
            .and_then(|png| {
                let explanation = self.explain(&task_prompt, &idea)?;
                Ok((png, explanation))
            });
        let (png, explanation) = match generated {
            Ok(v) => v,
            Err(e) => {
                let target = FailureTarget::IdeaImage {
                    idea_id: idea_id.clone(),
                };
                return Err(self.record_failure(session, tab_id, target, e.into()));
            }
        };
        let record = ImageRecord {
            image_id: self.ids.image(),
            origin: Origin::FromIdea {
                idea_id: idea_id.clone(),
            },
            prompt_used: prompt,
            explanation: Some(explanation),
            quality,
            tab_id,
            bytes_ref: self.blobs.put(&png)?,
            downloaded: false,
        };
        self.append(
            session,
            EventKind::IdeaImageGenerated {
                image: record.clone(),
            },
        )?;
        Ok(record)
    }

    fn explain(
        &self,
        task_prompt: &str,
        idea: &IdeaCard,
    ) -> Result<String, crate::providers::ProviderError> {
        let texts = &self.instructions.explanation;
        let user = fill(
            &texts.task,
            &[
                ("task_prompt", task_prompt),
                ("title", &idea.title),
                ("description", &idea.description),
            ],
        );
        let req = TextRequest::new(TextTask::Explanation, texts.system.clone(), user)
            .input("task_prompt", task_prompt)
            .input("idea_title", &idea.title)
            .input("idea_description", &idea.description);
        let text = self.providers.text.generate(&req)?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(crate::providers::ProviderError::schema("empty explanation"));
        }
        Ok(text)
    }

    pub(crate) fn record_failure(
        &self,
        session: &SessionHandle,
        tab_id: crate::ids::TabId,
        target: FailureTarget,
        error: StudioError,
    ) -> StudioError {
        if let Err(e) = self.append(
            session,
            EventKind::GenerationFailed {
                tab_id,
                target,
                error: error.to_string(),
            },
        ) {
            log::error!("could not record generation failure: {e}");
        }
        error
    }
}

/// Shared handle type used by callers that keep a studio in an `Arc`.
pub type SharedStudio = Arc<Studio>;
