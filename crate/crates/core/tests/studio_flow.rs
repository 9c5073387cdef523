mod common;

use std::sync::Arc;

use cocreate_core::demo::run_demo;
use cocreate_core::evaluation::behavioral_metrics;
use cocreate_core::ideation::{IdeaPatch, NewIdea, Provenance};
use cocreate_core::providers::mock::{FlakyImage, MockImage, MockText};
use cocreate_core::providers::{ProviderError, TextCapabilities, TextProvider, TextRequest};
use cocreate_core::refinement::VariationRequest;
use cocreate_core::session::{events_from_jsonl, replay, EventKind, FailureTarget};
use cocreate_core::sketch::{serialize_sketch, Choice};
use cocreate_core::studio::SketchBounds;
use cocreate_core::{Studio, StudioError};
use common::oracles::{independent_render, random_selections, random_sketch, selected_values};
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TASK: &str = "Encourage students to spend more time outdoors";

#[test]
fn scripted_demo_metrics() {
    let studio = Studio::mock(7);
    let run = run_demo(&studio, None).unwrap();
    let m = behavioral_metrics(&run.session.events()).unwrap();
    assert_eq!(m.image_clusters, 2);
    assert_eq!(m.user_created_ideas, 1);
    assert_eq!(m.user_edited_ideas, 1);
    assert_eq!(m.default_adoption_rate, Some(0.5));
    assert_eq!(m.downloads, 1);
    assert_eq!(m.refine_prompt_count, 1);
    assert_eq!(m.regeneration_count, 2);
}

#[test]
fn demo_is_deterministic_and_replayable() {
    let a = run_demo(&Studio::mock(11), None).unwrap().session.export_jsonl();
    let b = run_demo(&Studio::mock(11), None).unwrap().session.export_jsonl();
    assert_eq!(a, b);
    let run = run_demo(&Studio::mock(11), None).unwrap();
    let events = events_from_jsonl(&a).unwrap();
    assert_eq!(replay(&events).unwrap(), run.session.snapshot());
}

#[test]
fn brainstorm_fills_grid_with_thumbnails() {
    let studio = Studio::mock(1);
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    assert_eq!(ideas.len(), 9);
    assert!(ideas.iter().all(|i| i.visual_ref.is_some()));
    assert!(ideas.iter().all(|i| i.provenance == Provenance::ModelGenerated));
    let prompted = s.read(|x| x.brainstorm_prompts[0].prompt.clone());
    assert_eq!(prompted, TASK);
}

#[test]
fn expand_excludes_existing_titles() {
    let studio = Studio::mock(2);
    let s = studio.create_session(TASK, None).unwrap();
    assert!(studio.expand_ideas(&s, None, None).is_err(), "expand needs a brainstorm first");
    let first = studio.brainstorm(&s, None, None).unwrap();
    let more = studio.expand_ideas(&s, Some("focus on humor"), Some(9)).unwrap();
    assert_eq!(more.len(), 9);
    for m in &more {
        assert!(first.iter().all(|f| f.title != m.title));
        assert!(m.description.contains("focus on humor"));
    }
    assert_eq!(s.read(|x| x.ideas.len()), 18);
    let last = s.events().last().unwrap().kind.clone();
    assert!(matches!(last, EventKind::IdeasExpanded { extra_context: Some(_), .. }));
}

#[test]
fn edit_create_delete() {
    let studio = Studio::mock(3);
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    let edited = studio
        .edit_idea(&s, &ideas[2].idea_id, IdeaPatch { title: Some("Renamed".into()), ..Default::default() })
        .unwrap();
    assert_eq!(edited.provenance, Provenance::UserEdited);
    assert!(studio.edit_idea(&s, &ideas[2].idea_id, IdeaPatch::default()).is_err());
    let mine = studio
        .create_idea(&s, NewIdea { title: "Mine".into(), description: "d".into(), ..Default::default() })
        .unwrap();
    assert_eq!(mine.provenance, Provenance::UserCreated);
    assert!(studio.create_idea(&s, NewIdea::default()).is_err());
    let image = studio.generate_idea_image(&s, &ideas[2].idea_id).unwrap();
    studio.delete_idea(&s, &ideas[2].idea_id).unwrap();
    assert!(s.read(|x| x.image(&image.image_id).is_some()), "images outlive deleted ideas");
    assert!(matches!(
        studio.delete_idea(&s, &ideas[2].idea_id),
        Err(StudioError::Session(cocreate_core::SessionError::NotFound { .. }))
    ));
}

#[test]
fn spark_records_explanation_and_quality() {
    let studio = Studio::mock(4);
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    let img = studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap();
    let explanation = img.explanation.clone().unwrap();
    assert!(explanation.contains(&ideas[0].title));
    assert_eq!(img.quality, cocreate_core::session::Quality::Medium);
    let text = cocreate_core::providers::mock::png_text(&studio.image_bytes(&img).unwrap());
    assert!(text.contains(&("quality".into(), "medium".into())));
}

#[test]
fn failed_generation_is_logged_and_session_usable() {
    let mut studio = Studio::mock(5);
    let flaky = FlakyImage::new(MockImage::new(5), vec![ProviderError::refusal("policy")]);
    studio.providers.image = Arc::new(flaky);
    let s = studio.create_session(TASK, None).unwrap();
    // the thumbnail sheet takes the injected failure; ideas still arrive
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    assert!(ideas.iter().all(|i| i.visual_ref.is_none()));

    let mut studio = Studio::mock(6);
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    studio.providers.image = Arc::new(FlakyImage::new(
        MockImage::new(6),
        vec![ProviderError::refusal("policy")],
    ));
    let err = studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap_err();
    assert!(matches!(err, StudioError::Provider(_)));
    let failures = s.read(|x| x.failures.clone());
    assert_eq!(failures.len(), 1);
    assert!(matches!(failures[0].target, FailureTarget::IdeaImage { .. }));
    // retry succeeds
    studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap();
}

#[test]
fn refine_flow_and_manual_edit() {
    let studio = Studio::mock(8);
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    let base = studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap();
    let tab = studio.open_refine_tab(&s, &base.image_id).unwrap();
    assert!(studio.generate_variation(&s, &tab.tab_id, &VariationRequest::default()).is_err());
    let sketch = studio.refine(&s, &tab.tab_id, "make the cow more active").unwrap();
    assert_eq!(sketch.parameters()[0].name, "cow_role");

    let preview = studio.preview(&s, &tab.tab_id, &VariationRequest::default()).unwrap();
    assert_eq!(preview.spans.len(), sketch.parameters().len());
    let manual = VariationRequest { selections: None, manual_prompt: Some("just a cow".into()) };
    assert!(studio.preview(&s, &tab.tab_id, &manual).unwrap().spans.is_empty());

    let v = studio.generate_variation(&s, &tab.tab_id, &manual).unwrap();
    assert_eq!(v.prompt_used, "just a cow");
    assert_eq!(v.parent(), Some(&base.image_id));
    let kinds: Vec<&str> = s.events().iter().rev().take(3).map(|e| e.kind.name()).collect();
    assert_eq!(kinds, ["VariationGenerated", "SelectionsApplied", "PromptManuallyEdited"]);
    let round = s.read(|x| x.rounds[0].clone());
    assert!(round.prompt_manually_edited && !round.used_defaults());

    // re-prompt replaces the sketch, the base stays fixed
    let second = studio.refine(&s, &tab.tab_id, "make the sky dramatic").unwrap();
    assert_eq!(s.read(|x| x.tab(&tab.tab_id).unwrap().current_sketch_id.clone()), Some(second.id().clone()));
    let v2 = studio.generate_variation(&s, &tab.tab_id, &VariationRequest::default()).unwrap();
    assert_eq!(v2.parent(), Some(&base.image_id));
    assert_eq!(v2.quality, cocreate_core::session::Quality::Auto);

    let bad = VariationRequest {
        selections: Some(cocreate_core::Selections::new().with("nope", Choice::Option(0))),
        manual_prompt: None,
    };
    assert!(matches!(
        studio.generate_variation(&s, &tab.tab_id, &bad),
        Err(StudioError::Selection(_))
    ));
}

#[test]
fn parallel_tabs_do_not_interfere() {
    let studio = Arc::new(Studio::mock(9));
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    let a = studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap();
    let b = studio.generate_idea_image(&s, &ideas[1].idea_id).unwrap();
    let tabs: Vec<_> = [&a, &b].iter().map(|i| studio.open_refine_tab(&s, &i.image_id).unwrap()).collect();
    std::thread::scope(|scope| {
        for t in &tabs {
            let (studio, s) = (studio.clone(), s.clone());
            scope.spawn(move || {
                studio.refine(&s, &t.tab_id, "make the dog bigger").unwrap();
                for _ in 0..3 {
                    studio.generate_variation(&s, &t.tab_id, &VariationRequest::default()).unwrap();
                }
            });
        }
    });
    let snap = s.snapshot();
    for (t, base) in tabs.iter().zip([&a, &b]) {
        let lib = snap.tab_library(&t.tab_id);
        assert_eq!(lib.len(), 4);
        assert!(lib[1..].iter().all(|i| i.parent() == Some(&base.image_id)));
    }
    assert_eq!(replay(&s.events()).unwrap(), snap);
}

/// Text provider answering sketch requests with whatever sketch is loaded.
struct Loaded(Mutex<String>);

impl TextProvider for Loaded {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities::default()
    }
    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        match req.task {
            cocreate_core::providers::TextTask::SketchSynthesis => Ok(self.0.lock().clone()),
            _ => MockText::new(0).generate(req),
        }
    }
}

#[test]
fn recorded_final_prompt_matches_independent_render() {
    let loaded = Arc::new(Loaded(Mutex::new(String::new())));
    let mut studio = Studio::mock(10);
    studio.providers.text = loaded.clone();
    studio.config.sketch_bounds = SketchBounds { min_params: 0, max_params: 100, min_options: 1, max_options: 100 };
    let s = studio.create_session(TASK, None).unwrap();
    let ideas = studio.brainstorm(&s, None, None).unwrap();
    let base = studio.generate_idea_image(&s, &ideas[0].idea_id).unwrap();
    let tab = studio.open_refine_tab(&s, &base.image_id).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let sketch = random_sketch(&mut rng);
        *loaded.0.lock() = serialize_sketch(&sketch);
        studio.refine(&s, &tab.tab_id, "vary it").unwrap();
        let sel = random_selections(&mut rng, &sketch);
        let expected = independent_render(sketch.template(), &selected_values(&sketch, &sel));
        let manual = VariationRequest { selections: Some(sel), manual_prompt: None };
        // empty renders are rejected by the image provider; that is a recorded failure
        match studio.generate_variation(&s, &tab.tab_id, &manual) {
            Ok(img) => assert_eq!(img.prompt_used, expected),
            Err(StudioError::Provider(_)) => assert!(expected.trim().is_empty()),
            Err(e) => panic!("{e}"),
        }
        let round = s.read(|x| x.rounds.last().unwrap().clone());
        assert_eq!(round.final_prompt, expected);
    }
}
