//! Versioned instruction texts sent to the text model.
//!
//! The prose lives in `assets/instructions.v1.json` and uses the same
//! `{slot}` syntax as sketches. Code only fills slots; it never embeds prose.

use serde::Deserialize;

use crate::sketch::{parse_template, Segment};

const BUILTIN: &str = include_str!("../assets/instructions.v1.json");

#[derive(Debug, Clone, Deserialize)]
pub struct IdeationTexts {
    pub system: String,
    pub associative: String,
    pub plain: String,
    pub task: String,
    pub context: String,
    pub exclusions: String,
    pub format: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PromptText {
    pub prompt: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TaskTexts {
    pub system: String,
    pub task: String,
    #[serde(default)]
    pub format: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Instructions {
    pub version: u32,
    pub ideation: IdeationTexts,
    pub idea_image: PromptText,
    pub explanation: TaskTexts,
    pub thumbnail: PromptText,
    pub sketch: TaskTexts,
    pub repair: String,
}

impl Instructions {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("built-in instruction asset is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Default for Instructions {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Substitute `{name}` slots. Values are inserted verbatim. Panics on a
/// slot without a value, which is a bug in the asset.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let segments = parse_template(template)
        .unwrap_or_else(|v| panic!("instruction template is malformed: {v:?}"));
    let mut out = String::new();
    for seg in segments {
        match seg {
            Segment::Literal(l) => out.push_str(&l),
            Segment::Slot(name) => {
                let (_, v) = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .unwrap_or_else(|| panic!("no value for instruction slot `{name}`"));
                out.push_str(v);
            }
        }
    }
    out
}
