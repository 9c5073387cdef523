//! Deterministic offline providers.
//!
//! Every mock output is a pure function of `(seed, request)`: the request is
//! hashed together with the seed and the digest seeds a ChaCha stream.

use std::collections::{BTreeSet, VecDeque};

use image::{Rgba, RgbaImage};
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::QualityMap;
use super::{
    normalize, EmbedInput, Embedder, ImageModel, ImageProvider, ImageRequest, ProviderError,
    TextCapabilities, TextProvider, TextRequest, TextTask,
};
use crate::sketch::escape_literal;

pub(crate) fn digest(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, parts))
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "i", "in", "into", "is", "it",
    "its", "less", "make", "me", "more", "my", "of", "on", "or", "please", "should", "so", "that",
    "the", "their", "them", "they", "this", "to", "very", "want", "with", "more", "less", "create",
    "images", "image", "encourage", "time",
];

fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .map(|w| w.to_ascii_lowercase())
        .filter(|w| w.len() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// (reference, source domain) pairs the associative mock draws from.
const ASSOCIATIONS: &[(&str, &str)] = &[
    ("The Interrupting Cow", "internet memes"),
    ("Sisyphus and the Boulder", "mythology"),
    ("Pandora's Jar", "mythology"),
    ("Icarus Flying Too Close", "mythology"),
    ("The Great Wave", "artworks"),
    ("Starry Night Vigil", "artworks"),
    ("Moon Landing Broadcast", "historical events"),
    ("The Trojan Horse", "mythology"),
    ("Library of Alexandria", "historical events"),
    ("Domino Cascade", "metaphors"),
    ("Butterfly Effect", "metaphors"),
    ("Odysseus Sailing Home", "mythology"),
    ("Bauhaus Workshop", "artworks"),
    ("Ukiyo-e Commuters", "artworks"),
    ("Medusa's Mirror Shield", "mythology"),
    ("Prometheus Stealing Fire", "mythology"),
    ("Tortoise and Hare", "fables"),
    ("Rosetta Stone Decoding", "historical events"),
    ("Silk Road Caravan", "historical events"),
    ("Apollo 13 Improvised Filter", "historical events"),
    ("Narcissus at the Pool", "mythology"),
    ("Ariadne's Thread", "mythology"),
    ("Phoenix Rising", "mythology"),
    ("The Pied Piper", "folklore"),
    ("Rip Van Winkle Wakes", "folklore"),
    ("Hourglass Sand", "metaphors"),
    ("Lighthouse Keeper", "metaphors"),
    ("Tower of Babel", "mythology"),
    ("Vitruvian Balance", "artworks"),
    ("Gutenberg Press Sparks", "historical events"),
    ("Mona Lisa Looks Away", "artworks"),
    ("Fall of the Berlin Wall", "historical events"),
    ("Pompeii Frozen Moment", "historical events"),
    ("Orpheus Looking Back", "mythology"),
    ("Plato's Cave", "philosophy"),
    ("The Scream Echo", "artworks"),
    ("Melting Clocks", "artworks"),
    ("Marathon Messenger", "historical events"),
    ("Cinderella at Midnight", "folklore"),
    ("Unplugged Campfire", "metaphors"),
];

const ADJECTIVES: &[&str] = &[
    "Bright", "Calm", "Bold", "Simple", "Friendly", "Modern", "Minimal", "Playful", "Clear",
    "Warm", "Vivid", "Gentle", "Striking", "Clean", "Cheerful", "Quiet",
];
const PLAIN_NOUNS: &[&str] = &["Poster", "Reminder", "Scene", "Message", "Moment", "Campaign"];

const ROLE_OPTIONS: &[&str] = &[
    "a friendly mascot guiding students",
    "a playful coach",
    "a tour guide",
    "a magician",
    "a crossing guard",
    "a museum docent",
];
const BACKGROUND_OPTIONS: &[&str] = &[
    "chatting on benches",
    "playing frisbee",
    "reading under trees",
    "sketching together",
];
const STYLE_OPTIONS: &[&str] = &[
    "flat vector illustration",
    "soft watercolor",
    "bold screen print",
    "paper cut-out collage",
];

/// Offline text model covering ideation, explanations and sketch synthesis.
pub struct MockText {
    seed: u64,
    mode_blind: bool,
    image_input: bool,
}

impl MockText {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            mode_blind: false,
            image_input: false,
        }
    }

    /// Ignore the ideation mode, so associative and plain requests produce
    /// identical idea sets.
    pub fn mode_blind(mut self) -> Self {
        self.mode_blind = true;
        self
    }

    /// Advertise image input support.
    pub fn with_image_input(mut self) -> Self {
        self.image_input = true;
        self
    }

    fn request_rng(&self, req: &TextRequest, skip_mode: bool) -> ChaCha8Rng {
        let mut inputs = req.inputs.clone();
        if skip_mode {
            inputs.remove("mode");
        }
        inputs.remove("repair_of");
        let inputs = serde_json::to_vec(&inputs).expect("inputs serialize");
        let task = serde_json::to_vec(&req.task).expect("task serializes");
        rng_for(self.seed, &[&task, &inputs, &req.sample.to_le_bytes()])
    }

    fn ideas(&self, req: &TextRequest) -> String {
        let prompt = req.input_str("user_prompt").unwrap_or_default();
        let count = req.inputs.get("count").and_then(Value::as_u64).unwrap_or(9) as usize;
        let excluded: BTreeSet<String> = req
            .inputs
            .get("existing_titles")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        let plain = !self.mode_blind && req.input_str("mode") == Some("plain");
        let mut rng = self.request_rng(req, self.mode_blind);

        let mut candidates: Vec<(String, String)> = if plain {
            let mut keywords = content_words(prompt);
            keywords.dedup();
            if keywords.is_empty() {
                keywords.push("idea".into());
            }
            keywords.truncate(4);
            let mut out = Vec::new();
            for adj in ADJECTIVES {
                for k in &keywords {
                    for n in PLAIN_NOUNS {
                        out.push((format!("{adj} {} {n}", capitalize(k)), "direct".to_string()));
                    }
                }
            }
            out
        } else {
            ASSOCIATIONS
                .iter()
                .map(|(t, d)| (t.to_string(), d.to_string()))
                .collect()
        };
        candidates.shuffle(&mut rng);
        let mut seen = BTreeSet::new();
        let picked: Vec<_> = candidates
            .into_iter()
            .filter(|(t, _)| !excluded.contains(t) && seen.insert(t.clone()))
            .take(count)
            .collect();
        let context = req.input_str("extra_context").unwrap_or_default();
        let ideas: Vec<Value> = picked
            .into_iter()
            .map(|(title, domain)| {
                let description = if plain {
                    format!("A {} poster that states the goal directly: {prompt}", title.to_lowercase())
                } else {
                    format!("Use \"{title}\" as a visual hook for: {prompt}")
                };
                let description = if context.is_empty() {
                    description
                } else {
                    format!("{description} ({context})")
                };
                json!({
                    "title": title,
                    "background": format!("{title} comes from {domain}."),
                    "description": description,
                    "categories": [domain, if plain { "literal" } else { "association" }],
                })
            })
            .collect();
        json!({ "ideas": ideas }).to_string()
    }

    fn explanation(&self, req: &TextRequest) -> String {
        let title = req.input_str("idea_title").unwrap_or("the idea");
        let goal = req.input_str("task_prompt").unwrap_or_default();
        let description = req.input_str("idea_description").unwrap_or_default();
        format!(
            "The image builds on \"{title}\": {description} This connects the visual back to the goal \"{goal}\"."
        )
    }

    fn sketch(&self, req: &TextRequest) -> String {
        let refine = req.input_str("refine_prompt").unwrap_or_default();
        let base = req.input_str("base_prompt").unwrap_or_default();
        let mut rng = self.request_rng(req, false);
        let subject = content_words(refine)
            .into_iter()
            .next()
            .unwrap_or_else(|| "subject".into());
        let role = format!("{subject}_role");
        let pick = |pool: &[&str], rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
            let mut v: Vec<String> = pool.iter().map(|s| s.to_string()).collect();
            v.shuffle(rng);
            v.truncate(n);
            v
        };
        let mut parameters = vec![
            json!({"name": role, "label": format!("{} role", capitalize(&subject)),
                   "options": pick(ROLE_OPTIONS, &mut rng, 4), "default_index": 0}),
            json!({"name": "back_activity", "label": "Background activity",
                   "options": pick(BACKGROUND_OPTIONS, &mut rng, 3), "default_index": 0}),
        ];
        let mut template = format!(
            "{}. Refinement: {}. The {subject} is {{{role}}}, people in the background are {{back_activity}}",
            escape_literal(base.trim_end_matches('.')),
            escape_literal(refine.trim_end_matches('.')),
        );
        if rng.gen_bool(0.5) {
            parameters.push(json!({"name": "art_style", "label": "Art style",
                "options": pick(STYLE_OPTIONS, &mut rng, 3), "default_index": 0}));
            template.push_str(", rendered as {art_style}");
        }
        template.push('.');
        json!({"version": 1, "template": template, "parameters": parameters}).to_string()
    }
}

impl TextProvider for MockText {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities {
            image_input: self.image_input,
        }
    }

    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        Ok(match req.task {
            TextTask::Ideation => self.ideas(req),
            TextTask::Explanation => self.explanation(req),
            TextTask::SketchSynthesis => self.sketch(req),
        })
    }
}

/// Replays a fixed script of results and records every request.
pub struct ScriptedText {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    requests: Mutex<Vec<TextRequest>>,
    image_input: bool,
}

impl ScriptedText {
    pub fn new(script: Vec<Result<String, ProviderError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
            image_input: false,
        }
    }

    pub fn with_image_input(mut self) -> Self {
        self.image_input = true;
        self
    }

    pub fn requests(&self) -> Vec<TextRequest> {
        self.requests.lock().clone()
    }
}

impl TextProvider for ScriptedText {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities {
            image_input: self.image_input,
        }
    }

    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        self.requests.lock().push(req.clone());
        self.script
            .lock()
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::transport(false, "script exhausted")))
    }
}

/// Encode RGBA pixels as PNG with UTF-8 text chunks.
pub fn encode_png(img: &RgbaImage, text: &[(&str, &str)]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            enc.add_itxt_chunk(k.to_string(), v.to_string())
                .expect("valid text chunk");
        }
        let mut w = enc.write_header().expect("PNG header");
        w.write_image_data(img.as_raw()).expect("PNG data");
    }
    out
}

pub fn solid_png(w: u32, h: u32, rgb: [u8; 3], text: &[(&str, &str)]) -> Vec<u8> {
    let img = RgbaImage::from_pixel(w, h, Rgba([rgb[0], rgb[1], rgb[2], 255]));
    encode_png(&img, text)
}

/// Text chunks stored in a PNG.
pub fn png_text(bytes: &[u8]) -> Vec<(String, String)> {
    let Ok(reader) = png::Decoder::new(bytes).read_info() else {
        return Vec::new();
    };
    let info = reader.info();
    let mut out: Vec<(String, String)> = info
        .uncompressed_latin1_text
        .iter()
        .map(|c| (c.keyword.clone(), c.text.clone()))
        .collect();
    for c in &info.utf8_text {
        if let Ok(t) = c.get_text() {
            out.push((c.keyword.clone(), t));
        }
    }
    out
}

/// Color the mock uses for a generated image.
pub fn mock_color(seed: u64, prompt: &str, quality_token: &str, model: ImageModel) -> [u8; 3] {
    let model = format!("{model:?}");
    let d = digest(seed, &[prompt.as_bytes(), quality_token.as_bytes(), model.as_bytes()]);
    [d[0], d[1], d[2]]
}

/// Offline image model. Generations are solid colors hashed from the
/// request; composite sheets get one color per tile; edits repaint the top
/// quarter of the base image, leaving the rest untouched.
pub struct MockImage {
    seed: u64,
    size: u32,
    quality_map: QualityMap,
}

impl MockImage {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            size: 96,
            quality_map: QualityMap::default(),
        }
    }

    pub fn with_size(mut self, size: u32) -> Self {
        self.size = size.max(1);
        self
    }

    fn metadata<'a>(&'a self, req: &'a ImageRequest) -> [(&'a str, &'a str); 2] {
        [
            ("prompt", req.prompt.as_str()),
            ("quality", self.quality_map.token(req.quality)),
        ]
    }
}

impl ImageProvider for MockImage {
    fn generate(&self, req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::invalid("empty image prompt"));
        }
        let token = self.quality_map.token(req.quality);
        let color = mock_color(self.seed, &req.prompt, token, req.model);
        let meta = self.metadata(req);
        match req.grid {
            None => Ok(solid_png(self.size, self.size, color, &meta)),
            Some((rows, cols)) => {
                let (rows, cols) = (rows.max(1), cols.max(1));
                let mut img = RgbaImage::new(self.size, self.size);
                let (tw, th) = ((self.size / cols).max(1), (self.size / rows).max(1));
                for (x, y, px) in img.enumerate_pixels_mut() {
                    let tile = (y / th).min(rows - 1) * cols + (x / tw).min(cols - 1);
                    let d = digest(self.seed, &[req.prompt.as_bytes(), &tile.to_le_bytes()]);
                    *px = Rgba([d[0], d[1], d[2], 255]);
                }
                Ok(encode_png(&img, &meta))
            }
        }
    }

    fn edit(&self, base: &[u8], req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::invalid("empty image prompt"));
        }
        let mut img = image::load_from_memory(base)
            .map_err(|e| ProviderError::invalid(format!("base image not decodable: {e}")))?
            .to_rgba8();
        let token = self.quality_map.token(req.quality);
        let [r, g, b] = mock_color(self.seed, &req.prompt, token, req.model);
        let band = (img.height() / 4).max(1);
        for y in 0..band.min(img.height()) {
            for x in 0..img.width() {
                img.put_pixel(x, y, Rgba([r, g, b, 255]));
            }
        }
        Ok(encode_png(&img, &self.metadata(req)))
    }
}

/// Image provider that fails a scripted number of times before delegating.
pub struct FlakyImage<P> {
    inner: P,
    failures: Mutex<VecDeque<ProviderError>>,
}

impl<P> FlakyImage<P> {
    pub fn new(inner: P, failures: Vec<ProviderError>) -> Self {
        Self {
            inner,
            failures: Mutex::new(failures.into()),
        }
    }
}

impl<P: ImageProvider> ImageProvider for FlakyImage<P> {
    fn generate(&self, req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        match self.failures.lock().pop_front() {
            Some(e) => Err(e),
            None => self.inner.generate(req),
        }
    }

    fn edit(&self, base: &[u8], req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        match self.failures.lock().pop_front() {
            Some(e) => Err(e),
            None => self.inner.edit(base, req),
        }
    }
}

/// Bag-of-tokens embedder: each token maps to a fixed pseudo-random
/// direction and a text embeds to the normalized sum, so texts sharing
/// words land close together. Images embed by content hash.
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed, dim: 64 }
    }

    fn direction(&self, key: &[u8]) -> Vec<f64> {
        let mut rng = rng_for(self.seed, &[b"embed", key]);
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn embed_one(&self, input: &EmbedInput) -> Result<Vec<f64>, ProviderError> {
        let mut v = match input {
            EmbedInput::Text(t) => {
                let tokens: Vec<String> = t
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|w| !w.is_empty())
                    .map(str::to_lowercase)
                    .collect();
                if tokens.is_empty() {
                    self.direction(t.as_bytes())
                } else {
                    let mut acc = vec![0.0; self.dim];
                    for tok in &tokens {
                        for (a, x) in acc.iter_mut().zip(self.direction(tok.as_bytes())) {
                            *a += x;
                        }
                    }
                    acc
                }
            }
            EmbedInput::Image(bytes) => {
                let d = digest(self.seed, &[b"image", bytes]);
                self.direction(&d)
            }
        };
        normalize(&mut v)?;
        Ok(v)
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if inputs.is_empty() {
            return Err(ProviderError::invalid("nothing to embed"));
        }
        inputs.iter().map(|i| self.embed_one(i)).collect()
    }
}
