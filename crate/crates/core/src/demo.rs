//! A scripted end-to-end session against whatever providers the studio
//! holds. Used for smoke runs, the sample log and the offline acceptance run.

use std::sync::Arc;

use crate::ideation::{IdeaPatch, NewIdea};
use crate::refinement::VariationRequest;
use crate::session::{EventSink, ImageRecord};
use crate::sketch::{default_selections, Choice};
use crate::studio::{SessionHandle, Studio, StudioError};

pub const DEMO_TASK: &str = "Create images that encourage university students to spend less time on their phones and reconnect with real life and others.";
pub const DEMO_REFINE: &str = "Make the cow more active and playful";

pub struct DemoRun {
    pub session: Arc<SessionHandle>,
    pub idea_images: Vec<ImageRecord>,
    pub variations: Vec<ImageRecord>,
}

/// brainstorm (9 ideas) → edit one → create one → spark two → open a refine
/// tab → sketch → generate with defaults → generate with a custom option →
/// download the last variation.
pub fn run_demo(studio: &Studio, sink: Option<Box<dyn EventSink>>) -> Result<DemoRun, StudioError> {
    let session = studio.create_session(DEMO_TASK, sink)?;
    let ideas = studio.brainstorm(&session, None, Some(9))?;
    studio.edit_idea(
        &session,
        &ideas[0].idea_id,
        IdeaPatch {
            description: Some(format!("{} Keep the tone light.", ideas[0].description)),
            ..Default::default()
        },
    )?;
    studio.create_idea(
        &session,
        NewIdea {
            title: "Phone Parking Lot".into(),
            description: "Phones parked in tiny garage bays while their owners play board games".into(),
            background: String::new(),
            categories: vec!["humor".into()],
        },
    )?;
    let idea_images = vec![
        studio.generate_idea_image(&session, &ideas[0].idea_id)?,
        studio.generate_idea_image(&session, &ideas[1].idea_id)?,
    ];
    let tab = studio.open_refine_tab(&session, &idea_images[0].image_id)?;
    let sketch = studio.refine(&session, &tab.tab_id, DEMO_REFINE)?;
    let first = studio.generate_variation(&session, &tab.tab_id, &VariationRequest::default())?;
    let mut custom = default_selections(&sketch);
    let name = sketch.parameters()[0].name.clone();
    custom.set(name, Choice::Custom("a breakdancing cow".into()));
    let second = studio.generate_variation(
        &session,
        &tab.tab_id,
        &VariationRequest {
            selections: Some(custom),
            manual_prompt: None,
        },
    )?;
    studio.mark_downloaded(&session, &second.image_id)?;
    Ok(DemoRun {
        session,
        idea_images,
        variations: vec![first, second],
    })
}
