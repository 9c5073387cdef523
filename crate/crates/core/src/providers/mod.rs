//! Contracts for the generative services the studio depends on.
//!
//! Three capabilities: structured text generation, image generation/editing
//! and embedding. Each has a deterministic mock (see [`mock`]) so every
//! workflow runs offline, an OpenAI-compatible HTTP client (see [`http`]),
//! and a record/replay transport for cassette-based tests (see [`cassette`]).

pub mod cassette;
pub mod config;
pub mod http;
pub mod mock;
mod retry;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::Quality;

pub use config::{ModelIds, ProviderConfig, QualityMap, Secret};
pub use retry::{InFlightLimit, Resilient, RetryPolicy, Sleeper, ThreadSleeper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderErrorKind {
    Timeout,
    RateLimited,
    Refusal,
    SchemaViolation,
    Transport,
    InvalidRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {detail}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub retryable: bool,
    pub detail: String,
}

impl ProviderError {
    pub fn timeout(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::Timeout, true, detail)
    }

    pub fn rate_limited(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::RateLimited, true, detail)
    }

    pub fn refusal(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::Refusal, false, detail)
    }

    pub fn schema(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::SchemaViolation, false, detail)
    }

    pub fn transport(retryable: bool, detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::Transport, retryable, detail)
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::InvalidRequest, false, detail)
    }

    fn new(kind: ProviderErrorKind, retryable: bool, detail: impl Into<String>) -> Self {
        Self {
            kind,
            retryable,
            detail: detail.into(),
        }
    }
}

/// What a text request is for. Real providers only see the prose; mocks
/// dispatch on this and on [`TextRequest::inputs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextTask {
    Ideation,
    Explanation,
    SketchSynthesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub task: TextTask,
    pub system: String,
    pub user: String,
    /// JSON schema the response must satisfy, when structured output is wanted.
    pub schema: Option<serde_json::Value>,
    /// PNG attached to the request; only sent when the provider accepts images.
    #[serde(skip)]
    pub image: Option<Vec<u8>>,
    /// Structured copy of the variable inputs the prose was built from.
    pub inputs: BTreeMap<String, serde_json::Value>,
    /// Independent-sample index, for repeated runs of the same request.
    pub sample: u32,
}

impl TextRequest {
    pub fn new(task: TextTask, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            task,
            system: system.into(),
            user: user.into(),
            schema: None,
            image: None,
            inputs: BTreeMap::new(),
            sample: 0,
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(
            key.to_string(),
            serde_json::to_value(value).expect("input serializes"),
        );
        self
    }

    pub fn input_str(&self, key: &str) -> Option<&str> {
        self.inputs.get(key).and_then(|v| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TextCapabilities {
    pub image_input: bool,
}

pub trait TextProvider: Send + Sync {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities::default()
    }

    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageModel {
    Primary,
    Thumbnail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt: String,
    pub quality: Quality,
    pub model: ImageModel,
    /// rows × cols when the image is a composite sheet of tiles.
    pub grid: Option<(u32, u32)>,
}

impl ImageRequest {
    pub fn new(prompt: impl Into<String>, quality: Quality) -> Self {
        Self {
            prompt: prompt.into(),
            quality,
            model: ImageModel::Primary,
            grid: None,
        }
    }
}

pub trait ImageProvider: Send + Sync {
    fn generate(&self, req: &ImageRequest) -> Result<Vec<u8>, ProviderError>;
    /// Edit `base` (PNG) following `req.prompt`.
    fn edit(&self, base: &[u8], req: &ImageRequest) -> Result<Vec<u8>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedInput {
    Text(String),
    Image(Vec<u8>),
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    /// One L2-normalized vector per input.
    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub fn normalize(v: &mut [f64]) -> Result<(), ProviderError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(ProviderError::schema("embedding has zero or non-finite norm"));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// The set of providers a studio runs against.
#[derive(Clone)]
pub struct Providers {
    pub text: Arc<dyn TextProvider>,
    pub image: Arc<dyn ImageProvider>,
    pub embed: Arc<dyn Embedder>,
}

impl Providers {
    /// Deterministic offline providers.
    pub fn mock(seed: u64) -> Self {
        Self {
            text: Arc::new(mock::MockText::new(seed)),
            image: Arc::new(mock::MockImage::new(seed)),
            embed: Arc::new(mock::MockEmbedder::new(seed)),
        }
    }

    /// HTTP providers with retry/backoff and the in-flight cap applied.
    pub fn from_config(config: &ProviderConfig) -> Result<Self, config::ConfigError> {
        config.validate()?;
        let transport: Arc<dyn http::Transport> = Arc::new(http::HttpTransport::new(config)?);
        Ok(Self::over_transport(config, transport))
    }

    pub fn over_transport(config: &ProviderConfig, transport: Arc<dyn http::Transport>) -> Self {
        let client = Arc::new(http::OpenAiCompatible::new(config.clone(), transport));
        let resilient = Arc::new(Resilient::new(
            client,
            RetryPolicy::standard(config.max_retries),
            Arc::new(ThreadSleeper),
            config.max_in_flight,
        ));
        Self {
            text: resilient.clone(),
            image: resilient.clone(),
            embed: resilient,
        }
    }
}
