//! OpenAI-compatible HTTP client behind a pluggable [`Transport`].

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{ConfigError, ProviderConfig};
use super::{
    normalize, EmbedInput, Embedder, ImageModel, ImageProvider, ImageRequest, ProviderError,
    TextCapabilities, TextProvider, TextRequest,
};

/// One API call as it goes over the wire, minus credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub method: String,
    pub path: String,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub status: u16,
    /// Raw response body.
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, ProviderError>;
}

impl<F> Transport for F
where
    F: Fn(&WireRequest) -> Result<WireResponse, ProviderError> + Send + Sync,
{
    fn send(&self, req: &WireRequest) -> Result<WireResponse, ProviderError> {
        self(req)
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    credential: super::Secret,
}

impl HttpTransport {
    pub fn new(config: &ProviderConfig) -> Result<Self, ConfigError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.trim_end_matches('/').to_string(),
            credential: config.credential.clone(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, ProviderError> {
        let url = format!("{}{}", self.endpoint, req.path);
        let method = reqwest::Method::from_bytes(req.method.as_bytes())
            .map_err(|e| ProviderError::invalid(e.to_string()))?;
        let resp = self
            .client
            .request(method, url)
            .bearer_auth(self.credential.expose())
            .json(&req.body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::timeout(e.to_string())
                } else {
                    ProviderError::transport(true, e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| ProviderError::transport(true, e.to_string()))?;
        Ok(WireResponse { status, body })
    }
}

/// Map a non-2xx response to the error taxonomy.
pub fn classify(resp: &WireResponse) -> ProviderError {
    let detail = format!("HTTP {}: {}", resp.status, truncate(&resp.body, 300));
    let code = serde_json::from_str::<Value>(&resp.body)
        .ok()
        .and_then(|v| v["error"]["code"].as_str().map(str::to_string))
        .unwrap_or_default();
    match resp.status {
        429 => ProviderError::rate_limited(detail),
        408 | 504 => ProviderError::timeout(detail),
        400 if code.contains("content_policy") || code.contains("moderation") => {
            ProviderError::refusal(detail)
        }
        500..=599 => ProviderError::transport(true, detail),
        _ => ProviderError::transport(false, detail),
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub struct OpenAiCompatible {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    image_input: bool,
}

impl OpenAiCompatible {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            config,
            transport,
            image_input: true,
        }
    }

    pub fn without_image_input(mut self) -> Self {
        self.image_input = false;
        self
    }

    fn call(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
        let req = WireRequest {
            method: "POST".into(),
            path: path.into(),
            body,
        };
        let resp = self.transport.send(&req)?;
        if !(200..300).contains(&resp.status) {
            return Err(classify(&resp));
        }
        serde_json::from_str(&resp.body)
            .map_err(|e| ProviderError::schema(format!("response is not JSON: {e}")))
    }

    fn image_model(&self, m: ImageModel) -> &str {
        match m {
            ImageModel::Primary => &self.config.models.image_model,
            ImageModel::Thumbnail => &self.config.models.thumbnail_model,
        }
    }

    fn decode_image(v: &Value) -> Result<Vec<u8>, ProviderError> {
        let b64 = v["data"][0]["b64_json"]
            .as_str()
            .ok_or_else(|| ProviderError::schema("missing data[0].b64_json"))?;
        B64.decode(b64)
            .map_err(|e| ProviderError::schema(format!("bad base64 image: {e}")))
    }
}

fn data_url(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", B64.encode(png))
}

impl TextProvider for OpenAiCompatible {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities {
            image_input: self.image_input,
        }
    }

    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        let user = match (&req.image, self.image_input) {
            (Some(png), true) => json!([
                {"type": "text", "text": req.user},
                {"type": "image_url", "image_url": {"url": data_url(png)}},
            ]),
            _ => json!(req.user),
        };
        let mut body = json!({
            "model": self.config.models.text_model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(schema) = &req.schema {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": "response", "schema": schema},
            });
        }
        let v = self.call("/chat/completions", body)?;
        let message = &v["choices"][0]["message"];
        if let Some(refusal) = message["refusal"].as_str() {
            return Err(ProviderError::refusal(refusal.to_string()));
        }
        message["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::schema("missing choices[0].message.content"))
    }
}

impl ImageProvider for OpenAiCompatible {
    fn generate(&self, req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::invalid("empty image prompt"));
        }
        let v = self.call(
            "/images/generations",
            json!({
                "model": self.image_model(req.model),
                "prompt": req.prompt,
                "quality": self.config.quality_map.token(req.quality),
                "n": 1,
            }),
        )?;
        Self::decode_image(&v)
    }

    fn edit(&self, base: &[u8], req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        if req.prompt.trim().is_empty() {
            return Err(ProviderError::invalid("empty image prompt"));
        }
        image::load_from_memory(base)
            .map_err(|e| ProviderError::invalid(format!("base image not decodable: {e}")))?;
        let v = self.call(
            "/images/edits",
            json!({
                "model": self.image_model(req.model),
                "prompt": req.prompt,
                "quality": self.config.quality_map.token(req.quality),
                "images": [{"image_url": data_url(base)}],
                "n": 1,
            }),
        )?;
        Self::decode_image(&v)
    }
}

impl Embedder for OpenAiCompatible {
    fn dimension(&self) -> usize {
        0
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if inputs.is_empty() {
            return Err(ProviderError::invalid("nothing to embed"));
        }
        let input: Vec<Value> = inputs
            .iter()
            .map(|i| match i {
                EmbedInput::Text(t) => json!(t),
                EmbedInput::Image(png) => json!({"image_url": data_url(png)}),
            })
            .collect();
        let v = self.call(
            "/embeddings",
            json!({"model": self.config.models.embedding_model, "input": input}),
        )?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| ProviderError::schema("missing data"))?;
        if data.len() != inputs.len() {
            return Err(ProviderError::schema(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|d| {
                let mut vec: Vec<f64> = d["embedding"]
                    .as_array()
                    .ok_or_else(|| ProviderError::schema("missing embedding"))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| ProviderError::schema("non-numeric embedding")))
                    .collect::<Result<_, _>>()?;
                normalize(&mut vec)?;
                Ok(vec)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ProviderErrorKind, TextTask};
    use crate::session::Quality;
    use parking_lot::Mutex;

    fn ok(body: Value) -> WireResponse {
        WireResponse {
            status: 200,
            body: body.to_string(),
        }
    }

    fn client(f: impl Fn(&WireRequest) -> Result<WireResponse, ProviderError> + Send + Sync + 'static) -> OpenAiCompatible {
        OpenAiCompatible::new(ProviderConfig::default(), Arc::new(f))
    }

    #[test]
    fn status_classification() {
        let c = |status, body: &str| classify(&WireResponse { status, body: body.into() });
        assert_eq!(c(429, "").kind, ProviderErrorKind::RateLimited);
        assert!(c(429, "").retryable);
        assert_eq!(c(504, "").kind, ProviderErrorKind::Timeout);
        let refusal = c(400, r#"{"error":{"code":"content_policy_violation"}}"#);
        assert_eq!(refusal.kind, ProviderErrorKind::Refusal);
        assert!(!refusal.retryable);
        assert!(c(503, "").retryable);
        assert!(!c(401, "").retryable);
    }

    #[test]
    fn chat_request_and_response() {
        let seen = Arc::new(Mutex::new(None));
        let seen2 = seen.clone();
        let c = client(move |r| {
            *seen2.lock() = Some(r.clone());
            Ok(ok(json!({"choices":[{"message":{"content":"{\"a\":1}","refusal":null}}]})))
        });
        let mut req = TextRequest::new(TextTask::Ideation, "sys", "hello");
        req.schema = Some(json!({"type":"object"}));
        assert_eq!(TextProvider::generate(&c, &req).unwrap(), "{\"a\":1}");
        let sent = seen.lock().clone().unwrap();
        assert_eq!(sent.path, "/chat/completions");
        assert_eq!(sent.body["model"], "gpt-5-2025-08-07");
        assert_eq!(sent.body["messages"][1]["content"], "hello");
        assert_eq!(sent.body["response_format"]["type"], "json_schema");
    }

    #[test]
    fn refusal_message_surfaces() {
        let c = client(|_| Ok(ok(json!({"choices":[{"message":{"content":null,"refusal":"cannot"}}]}))));
        let err = TextProvider::generate(&c, &TextRequest::new(TextTask::Explanation, "s", "u"))
            .unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Refusal);
    }

    #[test]
    fn image_generation_decodes_png() {
        let png = crate::providers::mock::solid_png(4, 4, [1, 2, 3], &[]);
        let b64 = B64.encode(&png);
        let c = client(move |r| {
            assert_eq!(r.body["quality"], "medium");
            assert_eq!(r.body["model"], "gpt-image-1-mini");
            Ok(ok(json!({"data":[{"b64_json": b64}]})))
        });
        let mut req = ImageRequest::new("a cow", Quality::Medium);
        req.model = ImageModel::Thumbnail;
        assert_eq!(ImageProvider::generate(&c, &req).unwrap(), png);
        assert_eq!(
            ImageProvider::generate(&c, &ImageRequest::new(" ", Quality::Auto))
                .unwrap_err()
                .kind,
            ProviderErrorKind::InvalidRequest
        );
    }

    #[test]
    fn embeddings_are_normalized() {
        let c = client(|_| Ok(ok(json!({"data":[{"embedding":[3.0,4.0]},{"embedding":[0.0,2.0]}]}))));
        let v = c
            .embed(&[EmbedInput::Text("a".into()), EmbedInput::Text("b".into())])
            .unwrap();
        assert!((v[0][0] - 0.6).abs() < 1e-12 && (v[0][1] - 0.8).abs() < 1e-12);
        assert_eq!(v[1], vec![0.0, 1.0]);
    }
}
