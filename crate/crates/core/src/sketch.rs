//! Parametric prompt sketches.
//!
//! A sketch is a prompt template with named `{slot}`s plus, for every slot, an
//! ordered list of candidate values. Rendering substitutes one value per
//! parameter and records where each substituted value landed in the output
//! (UTF-8 byte offsets), which is what the preview uses to bold the segments
//! that came from the user's choices.
//!
//! Literal braces are written `{{` and `}}`. Every slot must name a declared
//! parameter and every parameter must be used at least once; a parameter may
//! be used more than once, in which case all occurrences get the same value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::SketchId;

/// Current wire-format version.
pub const SKETCH_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub label: String,
    pub options: Vec<String>,
    pub default_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    id: SketchId,
    version: u32,
    template: String,
    parameters: Vec<Parameter>,
    segments: Vec<Segment>,
}

/// A single rule violation found while validating a sketch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    UnsupportedVersion,
    TemplateSyntax,
    UnknownSlot,
    UnusedParameter,
    BadName,
    DuplicateParameter,
    EmptyOptions,
    EmptyOption,
    NonZeroDefault,
    EmptyLabel,
    /// Parameter/option count outside the bounds the caller asked for.
    Bounds,
    /// The document itself is not a well-formed sketch.
    Malformed,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("malformed sketch document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid sketch: {}", join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.detail.as_str()).collect::<Vec<_>>().join("; ")
}

impl SketchError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            SketchError::Validation(v) => v,
            SketchError::Parse { .. } => &[],
        }
    }
}

/// Non-fatal findings, e.g. duplicate options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub parameter: String,
    pub detail: String,
}

/// A parameter's chosen value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Option(usize),
    Custom(String),
}

/// Parameter name → choice. Must cover exactly the sketch's parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Selections(pub BTreeMap<String, Choice>);

impl Selections {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, choice: Choice) -> Self {
        self.0.insert(name.into(), choice);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, choice: Choice) {
        self.0.insert(name.into(), choice);
    }

    pub fn get(&self, name: &str) -> Option<&Choice> {
        self.0.get(name)
    }

    /// True iff every choice is the first option.
    pub fn all_first_options(&self) -> bool {
        self.0.values().all(|c| matches!(c, Choice::Option(0)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SelectionError {
    #[error("no selection for parameter `{parameter}`")]
    Missing { parameter: String },
    #[error("selection for unknown parameter `{parameter}`")]
    Extra { parameter: String },
    #[error("option index {index} out of range for `{parameter}` ({len} options)")]
    OutOfRange {
        parameter: String,
        index: usize,
        len: usize,
    },
    #[error("custom value for `{parameter}` is empty")]
    EmptyCustom { parameter: String },
}

impl SelectionError {
    pub fn parameter(&self) -> &str {
        match self {
            SelectionError::Missing { parameter }
            | SelectionError::Extra { parameter }
            | SelectionError::OutOfRange { parameter, .. }
            | SelectionError::EmptyCustom { parameter } => parameter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoldSpan {
    pub param: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub spans: Vec<BoldSpan>,
}

impl RenderedPrompt {
    /// A preview consisting of hand-edited text; nothing is bold.
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            spans: Vec::new(),
        }
    }

    pub fn span_text(&self, span: &BoldSpan) -> &str {
        &self.text[span.start..span.end]
    }

    /// Rebuild the escaped template by putting `{param}` back in place of
    /// every span and re-escaping the literal text between spans.
    pub fn reconstruct_template(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for span in &self.spans {
            escape_into(&self.text[cursor..span.start], &mut out);
            out.push('{');
            out.push_str(&span.param);
            out.push('}');
            cursor = span.end;
        }
        escape_into(&self.text[cursor..], &mut out);
        out
    }
}

fn escape_into(literal: &str, out: &mut String) {
    for ch in literal.chars() {
        match ch {
            '{' => out.push_str("{{"),
            '}' => out.push_str("}}"),
            c => out.push(c),
        }
    }
}

/// Escape literal text so it can be embedded in a template verbatim.
pub fn escape_literal(literal: &str) -> String {
    let mut out = String::with_capacity(literal.len());
    escape_into(literal, &mut out);
    out
}

/// Lowercase letter followed by lowercase letters, digits or underscores.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Split an escaped template into literal and slot segments. Adjacent
/// literals are merged, so the result is canonical for a given template.
pub fn parse_template(template: &str) -> Result<Vec<Segment>, Vec<Violation>> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut violations = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                literal.push('{');
                i += 2;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                literal.push('}');
                i += 2;
            }
            b'{' => match template[i + 1..].find(['}', '{']) {
                Some(rel) if bytes[i + 1 + rel] == b'}' => {
                    let name = &template[i + 1..i + 1 + rel];
                    if !is_valid_name(name) {
                        violations.push(Violation {
                            code: ViolationCode::BadName,
                            detail: format!("slot name `{name}` at byte {i} is not a valid identifier"),
                        });
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(name.to_string()));
                    i += rel + 2;
                }
                _ => {
                    violations.push(Violation {
                        code: ViolationCode::TemplateSyntax,
                        detail: format!("unclosed `{{` at byte {i}"),
                    });
                    literal.push('{');
                    i += 1;
                }
            },
            b'}' => {
                violations.push(Violation {
                    code: ViolationCode::TemplateSyntax,
                    detail: format!("unescaped `}}` at byte {i}"),
                });
                literal.push('}');
                i += 1;
            }
            _ => {
                // copy one whole UTF-8 char
                let ch = template[i..].chars().next().expect("in bounds");
                literal.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    if violations.is_empty() {
        Ok(segments)
    } else {
        Err(violations)
    }
}

#[derive(Serialize)]
struct WireOut<'a> {
    sketch_id: &'a SketchId,
    version: u32,
    template: &'a str,
    parameters: &'a [Parameter],
}

#[derive(Serialize)]
struct WireContent<'a> {
    version: u32,
    template: &'a str,
    parameters: &'a [Parameter],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    #[serde(default)]
    sketch_id: Option<SketchId>,
    version: u32,
    template: String,
    parameters: Vec<Parameter>,
}

impl Sketch {
    /// Build and validate a sketch. When `id` is `None` the id is derived
    /// from the content, so equal content always gets the same id.
    pub fn new(
        id: Option<SketchId>,
        template: impl Into<String>,
        parameters: Vec<Parameter>,
    ) -> Result<Self, SketchError> {
        Self::build(id, SKETCH_VERSION, template.into(), parameters)
    }

    fn build(
        id: Option<SketchId>,
        version: u32,
        template: String,
        parameters: Vec<Parameter>,
    ) -> Result<Self, SketchError> {
        let mut violations = Vec::new();
        if version != SKETCH_VERSION {
            violations.push(Violation {
                code: ViolationCode::UnsupportedVersion,
                detail: format!("unsupported version {version}"),
            });
        }
        let (segments, template_ok) = match parse_template(&template) {
            Ok(s) => (s, true),
            Err(v) => {
                violations.extend(v);
                (Vec::new(), false)
            }
        };
        let slot_names: BTreeSet<&str> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.as_str()),
                Segment::Literal(_) => None,
            })
            .collect();
        let mut seen = BTreeSet::new();
        for p in &parameters {
            if !is_valid_name(&p.name) {
                violations.push(Violation {
                    code: ViolationCode::BadName,
                    detail: format!("parameter name `{}` is not a valid identifier", p.name),
                });
            }
            if !seen.insert(p.name.as_str()) {
                violations.push(Violation {
                    code: ViolationCode::DuplicateParameter,
                    detail: format!("duplicate parameter `{}`", p.name),
                });
            }
            if p.label.trim().is_empty() {
                violations.push(Violation {
                    code: ViolationCode::EmptyLabel,
                    detail: format!("parameter `{}` has an empty label", p.name),
                });
            }
            if p.options.is_empty() {
                violations.push(Violation {
                    code: ViolationCode::EmptyOptions,
                    detail: format!("parameter `{}` has no options", p.name),
                });
            }
            for (i, o) in p.options.iter().enumerate() {
                if o.is_empty() {
                    violations.push(Violation {
                        code: ViolationCode::EmptyOption,
                        detail: format!("option {i} of `{}` is empty", p.name),
                    });
                }
            }
            if p.default_index != 0 {
                violations.push(Violation {
                    code: ViolationCode::NonZeroDefault,
                    detail: format!(
                        "parameter `{}` has default_index {}; the default must be the first option",
                        p.name, p.default_index
                    ),
                });
            }
            if template_ok && !slot_names.contains(p.name.as_str()) {
                violations.push(Violation {
                    code: ViolationCode::UnusedParameter,
                    detail: format!("unused parameter `{}`", p.name),
                });
            }
        }
        for name in &slot_names {
            if !seen.contains(name) {
                violations.push(Violation {
                    code: ViolationCode::UnknownSlot,
                    detail: format!("unknown slot `{{{name}}}`"),
                });
            }
        }
        if !violations.is_empty() {
            return Err(SketchError::Validation(violations));
        }
        let id = id.unwrap_or_else(|| content_id(version, &template, &parameters));
        Ok(Self {
            id,
            version,
            template,
            parameters,
            segments,
        })
    }

    pub fn id(&self) -> &SketchId {
        &self.id
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn warnings(&self) -> Vec<Warning> {
        let mut out = Vec::new();
        for p in &self.parameters {
            let mut seen = BTreeSet::new();
            for o in &p.options {
                if !seen.insert(o.as_str()) {
                    out.push(Warning {
                        parameter: p.name.clone(),
                        detail: format!("duplicate option `{o}`"),
                    });
                }
            }
        }
        out
    }
}

fn content_id(version: u32, template: &str, parameters: &[Parameter]) -> SketchId {
    let body = serde_json::to_vec(&WireContent {
        version,
        template,
        parameters,
    })
    .expect("sketch content serializes");
    let digest = Sha256::digest(&body);
    SketchId::new(format!("sk_{}", &hex(&digest)[..20]))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse and validate a sketch document.
pub fn parse_sketch(wire: &str) -> Result<Sketch, SketchError> {
    let raw: WireIn = serde_json::from_str(wire).map_err(|e| SketchError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Sketch::build(raw.sketch_id, raw.version, raw.template, raw.parameters)
}

/// Canonical compact JSON: fixed key order, no insignificant whitespace.
pub fn serialize_sketch(sketch: &Sketch) -> String {
    serde_json::to_string(&WireOut {
        sketch_id: &sketch.id,
        version: sketch.version,
        template: &sketch.template,
        parameters: &sketch.parameters,
    })
    .expect("sketch serializes")
}

impl Serialize for Sketch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireOut {
            sketch_id: &self.id,
            version: self.version,
            template: &self.template,
            parameters: &self.parameters,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sketch {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = WireIn::deserialize(d)?;
        Sketch::build(raw.sketch_id, raw.version, raw.template, raw.parameters)
            .map_err(serde::de::Error::custom)
    }
}

pub fn default_selections(sketch: &Sketch) -> Selections {
    Selections(
        sketch
            .parameters
            .iter()
            .map(|p| (p.name.clone(), Choice::Option(0)))
            .collect(),
    )
}

/// Check that `sel` covers exactly the sketch's parameters with in-range
/// choices and resolve each to its text.
pub fn resolve<'a>(
    sketch: &'a Sketch,
    sel: &'a Selections,
) -> Result<BTreeMap<&'a str, &'a str>, SelectionError> {
    for name in sel.0.keys() {
        if sketch.parameter(name).is_none() {
            return Err(SelectionError::Extra {
                parameter: name.clone(),
            });
        }
    }
    let mut values = BTreeMap::new();
    for p in &sketch.parameters {
        let value = match sel.0.get(&p.name) {
            None => {
                return Err(SelectionError::Missing {
                    parameter: p.name.clone(),
                })
            }
            Some(Choice::Option(i)) => p.options.get(*i).ok_or(SelectionError::OutOfRange {
                parameter: p.name.clone(),
                index: *i,
                len: p.options.len(),
            })?,
            Some(Choice::Custom(text)) if text.is_empty() => {
                return Err(SelectionError::EmptyCustom {
                    parameter: p.name.clone(),
                })
            }
            Some(Choice::Custom(text)) => text,
        };
        values.insert(p.name.as_str(), value.as_str());
    }
    Ok(values)
}

pub fn render(sketch: &Sketch, sel: &Selections) -> Result<RenderedPrompt, SelectionError> {
    let values = resolve(sketch, sel)?;
    let mut text = String::new();
    let mut spans = Vec::new();
    for seg in &sketch.segments {
        match seg {
            Segment::Literal(l) => text.push_str(l),
            Segment::Slot(name) => {
                let value = values[name.as_str()];
                let start = text.len();
                text.push_str(value);
                spans.push(BoldSpan {
                    param: name.clone(),
                    start,
                    end: text.len(),
                });
            }
        }
    }
    Ok(RenderedPrompt { text, spans })
}
