//! Behavioral metrics, computed by replaying a session's event log.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ideation::Provenance;
use crate::ids::SessionId;
use crate::session::{apply_event, image_clusters, Event, EventKind, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralMetrics {
    pub session_id: SessionId,
    /// Idea images plus their variation trees.
    pub image_clusters: usize,
    /// Refine prompts submitted (sketch requests).
    pub refine_prompt_count: usize,
    /// Variations generated, including option-only regenerations.
    pub regeneration_count: usize,
    pub user_created_ideas: usize,
    /// Distinct model-generated ideas the user edited.
    pub user_edited_ideas: usize,
    /// Share of generated variations that kept every first option and the
    /// rendered prompt. Absent when there are no variations.
    pub default_adoption_rate: Option<f64>,
    /// Distinct images downloaded (fluency).
    pub downloads: usize,
}

pub const CSV_HEADER: &str = "session_id,image_clusters,refine_prompt_count,regeneration_count,user_created_ideas,user_edited_ideas,default_adoption_rate,downloads";

impl BehavioralMetrics {
    /// One CSV row matching [`CSV_HEADER`]; an absent rate is an empty cell.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.session_id,
            self.image_clusters,
            self.refine_prompt_count,
            self.regeneration_count,
            self.user_created_ideas,
            self.user_edited_ideas,
            self.default_adoption_rate
                .map(|r| format!("{r:.6}"))
                .unwrap_or_default(),
            self.downloads
        )
    }
}

pub fn metrics_csv(rows: &[BehavioralMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn behavioral_metrics(events: &[Event]) -> Result<BehavioralMetrics, EvalError> {
    let mut state: Option<Session> = None;
    let mut refine_prompts = 0;
    let mut regenerations = 0;
    let mut created = 0;
    let mut edited = BTreeSet::new();
    let mut default_rounds = 0;
    for event in events {
        match &event.kind {
            EventKind::RefinePrompted { .. } => refine_prompts += 1,
            EventKind::IdeaCreated { .. } => created += 1,
            EventKind::IdeaEdited { idea_id, .. } => {
                // provenance before this edit decides whether it counts
                let before = state
                    .as_ref()
                    .and_then(|s| s.idea(idea_id))
                    .map(|i| i.provenance);
                if matches!(before, Some(Provenance::ModelGenerated | Provenance::UserEdited)) {
                    edited.insert(idea_id.clone());
                }
            }
            EventKind::VariationGenerated { round_id, .. } => {
                regenerations += 1;
                let round = state.as_ref().and_then(|s| s.round(round_id));
                if round.is_some_and(|r| r.used_defaults()) {
                    default_rounds += 1;
                }
            }
            _ => {}
        }
        state = Some(apply_event(state, event)?);
    }
    let session = state.ok_or(EvalError::EmptySample)?;
    Ok(BehavioralMetrics {
        session_id: session.session_id.clone(),
        image_clusters: image_clusters(&session).len(),
        refine_prompt_count: refine_prompts,
        regeneration_count: regenerations,
        user_created_ideas: created,
        user_edited_ideas: edited.len(),
        default_adoption_rate: (regenerations > 0)
            .then(|| default_rounds as f64 / regenerations as f64),
        downloads: session.images.values().filter(|i| i.downloaded).count(),
    })
}
