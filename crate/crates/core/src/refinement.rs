//! Refinement: sketch synthesis, selection preview and variations anchored
//! on a refine tab's base image.

use serde::{Deserialize, Serialize};

use crate::ids::{RoundId, SketchId, TabId};
use crate::instructions::{fill, Instructions};
use crate::providers::{ImageRequest, TextProvider, TextRequest, TextTask};
use crate::session::{EventKind, FailureTarget, ImageRecord, Origin, TabKind};
use crate::sketch::{
    default_selections, parse_sketch, render, RenderedPrompt, Selections, Sketch, SketchError,
    Violation, ViolationCode,
};
use crate::structured::{generate_with_repair, StructuredError};
use crate::studio::{SessionHandle, SketchBounds, Studio, StudioError};

/// One "Generate" press in a refine tab.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub round_id: RoundId,
    pub tab_id: TabId,
    pub refine_prompt: String,
    pub sketch_id: SketchId,
    pub selections_used: Selections,
    pub prompt_manually_edited: bool,
    pub final_prompt: String,
    pub result_image_id: Option<crate::ids::ImageId>,
    pub failure: Option<String>,
}

impl RefinementRound {
    /// Every parameter left at its first option and the prompt untouched.
    pub fn used_defaults(&self) -> bool {
        self.selections_used.all_first_options() && !self.prompt_manually_edited
    }
}

pub fn sketch_schema() -> serde_json::Value {
    serde_json::json!({
        "type": "object",
        "required": ["version", "template", "parameters"],
        "properties": {
            "version": {"type": "integer"},
            "template": {"type": "string"},
            "parameters": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "label", "options", "default_index"],
                    "properties": {
                        "name": {"type": "string"},
                        "label": {"type": "string"},
                        "options": {"type": "array", "items": {"type": "string"}},
                        "default_index": {"type": "integer"}
                    }
                }
            }
        }
    })
}

pub fn bounds_violations(sketch: &Sketch, bounds: &SketchBounds) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = sketch.parameters().len();
    if n < bounds.min_params || n > bounds.max_params {
        out.push(Violation {
            code: ViolationCode::Bounds,
            detail: format!(
                "sketch has {n} parameters, expected {} to {}",
                bounds.min_params, bounds.max_params
            ),
        });
    }
    for p in sketch.parameters() {
        let k = p.options.len();
        if k < bounds.min_options || k > bounds.max_options {
            out.push(Violation {
                code: ViolationCode::Bounds,
                detail: format!(
                    "parameter `{}` has {k} options, expected {} to {}",
                    p.name, bounds.min_options, bounds.max_options
                ),
            });
        }
    }
    out
}

fn parse_bounded(raw: &str, bounds: &SketchBounds) -> Result<Sketch, SketchError> {
    let sketch = parse_sketch(raw.trim())?;
    let v = bounds_violations(&sketch, bounds);
    if v.is_empty() {
        Ok(sketch)
    } else {
        Err(SketchError::Validation(v))
    }
}

fn synthesis_violations(e: SketchError) -> Vec<Violation> {
    match e {
        SketchError::Validation(v) => v,
        other => vec![Violation {
            code: ViolationCode::Malformed,
            detail: other.to_string(),
        }],
    }
}

/// Inputs for one synthesis call.
pub struct SynthesisInput<'a> {
    pub refine_prompt: &'a str,
    pub base_prompt: &'a str,
    pub base_image: Option<&'a [u8]>,
}

/// Turn a refinement request into a validated sketch. Returns the sketch and
/// whether the base image pixels were sent.
pub fn synthesize_sketch(
    provider: &dyn TextProvider,
    instructions: &Instructions,
    bounds: &SketchBounds,
    input: &SynthesisInput<'_>,
) -> Result<(Sketch, bool), StudioError> {
    let texts = &instructions.sketch;
    let user = [
        fill(
            &texts.task,
            &[
                ("base_prompt", input.base_prompt),
                ("refine_prompt", input.refine_prompt),
                ("min_params", &bounds.min_params.to_string()),
                ("max_params", &bounds.max_params.to_string()),
                ("min_options", &bounds.min_options.to_string()),
                ("max_options", &bounds.max_options.to_string()),
            ],
        ),
        fill(&texts.format, &[]),
    ]
    .join("\n\n");
    let mut req = TextRequest::new(TextTask::SketchSynthesis, texts.system.clone(), user)
        .input("refine_prompt", input.refine_prompt)
        .input("base_prompt", input.base_prompt);
    req.schema = Some(sketch_schema());
    let image_input_used = provider.capabilities().image_input && input.base_image.is_some();
    if image_input_used {
        req.image = input.base_image.map(<[u8]>::to_vec);
    }
    let sketch = generate_with_repair(provider, instructions, &req, |raw| {
        parse_bounded(raw, bounds)
    })
    .map_err(|e| match e {
        StructuredError::Provider(p) => StudioError::Provider(p),
        StructuredError::Rejected { last, .. } => StudioError::SketchSynthesis {
            violations: synthesis_violations(last),
        },
    })?;
    Ok((sketch, image_input_used))
}

/// What the user submits with "Generate".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationRequest {
    /// Defaults to every parameter's first option when absent.
    #[serde(default)]
    pub selections: Option<Selections>,
    /// Replaces the rendered prompt verbatim.
    #[serde(default)]
    pub manual_prompt: Option<String>,
}

impl Studio {
    fn refine_context(
        &self,
        session: &SessionHandle,
        tab_id: &TabId,
    ) -> Result<(ImageRecord, Option<SketchId>), StudioError> {
        session.read(|s| {
            let tab = s
                .tab(tab_id)
                .ok_or_else(|| StudioError::not_found("tab", tab_id))?;
            if tab.kind != TabKind::Refine {
                return Err(StudioError::invalid(format!("tab {tab_id} is not a refine tab")));
            }
            let base = tab
                .base_image_id
                .as_ref()
                .and_then(|id| s.image(id))
                .cloned()
                .ok_or_else(|| StudioError::invalid("refine tab has no base image"))?;
            Ok((base, tab.current_sketch_id.clone()))
        })
    }

    /// Submit a refine prompt and synthesize the sketch for it. Calling this
    /// again on the same tab re-prompts and replaces the current sketch.
    pub fn refine(
        &self,
        session: &SessionHandle,
        tab_id: &TabId,
        refine_prompt: &str,
    ) -> Result<Sketch, StudioError> {
        let refine_prompt = refine_prompt.trim();
        if refine_prompt.is_empty() {
            return Err(StudioError::invalid("refine prompt is empty"));
        }
        let lock = session.tab_lock(tab_id);
        let _serial = lock.lock();
        let (base, _) = self.refine_context(session, tab_id)?;
        self.append(
            session,
            EventKind::RefinePrompted {
                tab_id: tab_id.clone(),
                refine_prompt: refine_prompt.to_string(),
            },
        )?;
        let synthesized = self.image_bytes(&base).and_then(|bytes| {
            synthesize_sketch(
                self.providers.text.as_ref(),
                &self.instructions,
                &self.config.sketch_bounds,
                &SynthesisInput {
                    refine_prompt,
                    base_prompt: &base.prompt_used,
                    base_image: Some(&bytes),
                },
            )
        });
        let (sketch, image_input_used) = match synthesized {
            Ok(v) => v,
            Err(e) => {
                return Err(self.record_failure(
                    session,
                    tab_id.clone(),
                    FailureTarget::Sketch,
                    e,
                ))
            }
        };
        self.append(
            session,
            EventKind::SketchSynthesized {
                tab_id: tab_id.clone(),
                sketch: sketch.clone(),
                image_input_used,
            },
        )?;
        Ok(sketch)
    }

    pub fn current_sketch(
        &self,
        session: &SessionHandle,
        tab_id: &TabId,
    ) -> Result<Sketch, StudioError> {
        let (_, sketch_id) = self.refine_context(session, tab_id)?;
        let sketch_id =
            sketch_id.ok_or_else(|| StudioError::invalid("tab has no sketch yet"))?;
        Ok(session.read(|s| s.sketch(&sketch_id).cloned().expect("current sketch is stored")))
    }

    /// Live preview of the prompt for `req`. No event is written.
    pub fn preview(
        &self,
        session: &SessionHandle,
        tab_id: &TabId,
        req: &VariationRequest,
    ) -> Result<RenderedPrompt, StudioError> {
        let sketch = self.current_sketch(session, tab_id)?;
        let selections = req
            .selections
            .clone()
            .unwrap_or_else(|| default_selections(&sketch));
        let rendered = render(&sketch, &selections)?;
        Ok(match manual_text(req)? {
            Some(text) => RenderedPrompt::plain(text),
            None => rendered,
        })
    }

    /// Record the round and edit the tab's base image with its final prompt.
    pub fn generate_variation(
        &self,
        session: &SessionHandle,
        tab_id: &TabId,
        req: &VariationRequest,
    ) -> Result<ImageRecord, StudioError> {
        let lock = session.tab_lock(tab_id);
        let _serial = lock.lock();
        let (base, sketch_id) = self.refine_context(session, tab_id)?;
        let sketch_id =
            sketch_id.ok_or_else(|| StudioError::invalid("tab has no sketch yet"))?;
        let sketch = session.read(|s| s.sketch(&sketch_id).cloned().expect("stored"));
        let selections = req
            .selections
            .clone()
            .unwrap_or_else(|| default_selections(&sketch));
        let rendered = render(&sketch, &selections)?;
        let manual = manual_text(req)?;
        let round_id = self.ids.round();
        if let Some(text) = &manual {
            self.append(
                session,
                EventKind::PromptManuallyEdited {
                    tab_id: tab_id.clone(),
                    round_id: round_id.clone(),
                    text: text.clone(),
                },
            )?;
        }
        let final_prompt = manual.clone().unwrap_or(rendered.text);
        self.append(
            session,
            EventKind::SelectionsApplied {
                tab_id: tab_id.clone(),
                round_id: round_id.clone(),
                sketch_id,
                used_defaults: selections.all_first_options() && manual.is_none(),
                selections,
                prompt_manually_edited: manual.is_some(),
                final_prompt: final_prompt.clone(),
            },
        )?;
        let quality = self.config.variation_quality;
        let edited = self.image_bytes(&base).and_then(|bytes| {
            self.providers
                .image
                .edit(&bytes, &ImageRequest::new(final_prompt.clone(), quality))
                .map_err(StudioError::from)
        });
        let stored = edited.and_then(|png| Ok(self.blobs.put(&png)?));
        let bytes_ref = match stored {
            Ok(r) => r,
            Err(e) => {
                let target = FailureTarget::Variation { round_id };
                return Err(self.record_failure(session, tab_id.clone(), target, e));
            }
        };
        let image = ImageRecord {
            image_id: self.ids.image(),
            origin: Origin::Variation {
                parent_image_id: base.image_id.clone(),
            },
            prompt_used: final_prompt,
            explanation: None,
            quality,
            tab_id: tab_id.clone(),
            bytes_ref,
            downloaded: false,
        };
        self.append(
            session,
            EventKind::VariationGenerated {
                tab_id: tab_id.clone(),
                round_id,
                image: image.clone(),
            },
        )?;
        Ok(image)
    }
}

fn manual_text(req: &VariationRequest) -> Result<Option<String>, StudioError> {
    match &req.manual_prompt {
        None => Ok(None),
        Some(t) if t.trim().is_empty() => Err(StudioError::invalid("manual prompt is empty")),
        Some(t) => Ok(Some(t.clone())),
    }
}
