//! Post-task questionnaire scoring: unweighted creativity-support dimensions,
//! the two-item usability scale, a learning item, and external ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bibd::System;
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use super::{check_range, summarize, EvalError, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiDimension {
    Enjoyment,
    Exploration,
    Expressiveness,
    Immersion,
    ResultsWorthEffort,
}

impl CsiDimension {
    pub const ALL: [CsiDimension; 5] = [
        CsiDimension::Enjoyment,
        CsiDimension::Exploration,
        CsiDimension::Expressiveness,
        CsiDimension::Immersion,
        CsiDimension::ResultsWorthEffort,
    ];
}

/// Dimension score from its two 0–10 agreement items; range 0–20.
pub fn csi_dimension_score(first: f64, second: f64) -> Result<f64, EvalError> {
    Ok(check_range("csi item", first, 0.0, 10.0)? + check_range("csi item", second, 0.0, 10.0)?)
}

/// Raw two-item usability score on 0–100 from 1–7 items.
pub fn umux_lite_overall(capabilities: f64, ease: f64) -> Result<f64, EvalError> {
    let c = check_range("capabilities", capabilities, 1.0, 7.0)?;
    let e = check_range("ease", ease, 1.0, 7.0)?;
    Ok(((c - 1.0) + (e - 1.0)) / 12.0 * 100.0)
}

/// One participant's questionnaire for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub participant_id: String,
    /// The system the questionnaire refers to.
    pub condition: System,
    pub csi_dimensions: BTreeMap<CsiDimension, f64>,
    /// (capabilities, ease), each 1–7.
    pub umux_items: (f64, f64),
    pub learning_item: f64,
}

impl ScoreRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        for d in CsiDimension::ALL {
            let v = self.csi_dimensions.get(&d).copied().unwrap_or(f64::NAN);
            check_range("csi dimension", v, 0.0, 20.0)?;
        }
        umux_lite_overall(self.umux_items.0, self.umux_items.1)?;
        check_range("learning", self.learning_item, 1.0, 7.0)?;
        Ok(())
    }

    pub fn umux_overall(&self) -> Result<f64, EvalError> {
        umux_lite_overall(self.umux_items.0, self.umux_items.1)
    }
}

/// Named measure, e.g. `csi.enjoyment` or `umux.overall`.
fn measures(r: &ScoreRecord) -> Result<Vec<(String, f64)>, EvalError> {
    let mut out: Vec<(String, f64)> = r
        .csi_dimensions
        .iter()
        .map(|(d, v)| {
            let name = serde_json::to_value(d).expect("serializes");
            (format!("csi.{}", name.as_str().unwrap_or_default()), *v)
        })
        .collect();
    out.push(("umux.capabilities".into(), r.umux_items.0));
    out.push(("umux.ease".into(), r.umux_items.1));
    out.push(("umux.overall".into(), r.umux_overall()?));
    out.push(("learning".into(), r.learning_item));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureComparison {
    pub measure: String,
    pub structured: Option<Summary>,
    pub chat: Option<Summary>,
    /// Paired over participants with both records; absent if not testable.
    pub wilcoxon: Option<WilcoxonResult>,
}

/// Per-measure means/SDs per system and a paired test across participants.
/// Overall usability is averaged per participant, not computed from means.
pub fn compare_systems(records: &[ScoreRecord]) -> Result<Vec<MeasureComparison>, EvalError> {
    let mut by_measure: BTreeMap<String, BTreeMap<(String, System), f64>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        for (m, v) in measures(r)? {
            by_measure
                .entry(m)
                .or_default()
                .insert((r.participant_id.clone(), r.condition), v);
        }
    }
    Ok(by_measure
        .into_iter()
        .map(|(measure, values)| {
            let of = |sys: System| -> Vec<f64> {
                values.iter().filter(|((_, s), _)| *s == sys).map(|(_, v)| *v).collect()
            };
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for ((p, s), v) in &values {
                if *s == System::StructuredSystem {
                    if let Some(w) = values.get(&(p.clone(), System::ChatBaseline)) {
                        a.push(*v);
                        b.push(*w);
                    }
                }
            }
            MeasureComparison {
                structured: summarize(&of(System::StructuredSystem)),
                chat: summarize(&of(System::ChatBaseline)),
                wilcoxon: wilcoxon_signed_rank(&a, &b).ok(),
                measure,
            }
        })
        .collect())
}

/// One evaluator's 1–7 rating of one final image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRating {
    pub participant_id: String,
    pub condition: System,
    pub image_id: String,
    pub evaluator: String,
    pub novelty: f64,
    pub usefulness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRating {
    pub participant_id: String,
    pub condition: System,
    pub novelty: f64,
    pub usefulness: f64,
    pub images: usize,
}

/// Average evaluators per image, then images per participant and system.
pub fn aggregate_ratings(ratings: &[ImageRating]) -> Result<Vec<ParticipantRating>, EvalError> {
    type Key = (String, System);
    let mut per_image: BTreeMap<(Key, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in ratings {
        check_range("novelty", r.novelty, 1.0, 7.0)?;
        check_range("usefulness", r.usefulness, 1.0, 7.0)?;
        per_image
            .entry(((r.participant_id.clone(), r.condition), r.image_id.clone()))
            .or_default()
            .push((r.novelty, r.usefulness));
    }
    let mut per_participant: BTreeMap<Key, Vec<(f64, f64)>> = BTreeMap::new();
    for ((key, _), scores) in per_image {
        let n = scores.len() as f64;
        let novelty = scores.iter().map(|s| s.0).sum::<f64>() / n;
        let usefulness = scores.iter().map(|s| s.1).sum::<f64>() / n;
        per_participant.entry(key).or_default().push((novelty, usefulness));
    }
    Ok(per_participant
        .into_iter()
        .map(|((participant_id, condition), images)| {
            let n = images.len() as f64;
            ParticipantRating {
                participant_id,
                condition,
                novelty: images.iter().map(|s| s.0).sum::<f64>() / n,
                usefulness: images.iter().map(|s| s.1).sum::<f64>() / n,
                images: images.len(),
            }
        })
        .collect())
}
