use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::Quality;

/// Credential that never shows up in `Debug` output or logs.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub text_model: String,
    pub image_model: String,
    pub thumbnail_model: String,
    pub embedding_model: String,
}

impl Default for ModelIds {
    fn default() -> Self {
        Self {
            text_model: "gpt-5-2025-08-07".into(),
            image_model: "gpt-image-1".into(),
            thumbnail_model: "gpt-image-1-mini".into(),
            embedding_model: "clip-vit-bigg-14".into(),
        }
    }
}

/// Provider-specific quality token per tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityMap {
    pub medium: String,
    pub auto: String,
}

impl QualityMap {
    pub fn token(&self, q: Quality) -> &str {
        match q {
            Quality::Medium => &self.medium,
            Quality::Auto => &self.auto,
        }
    }
}

impl Default for QualityMap {
    fn default() -> Self {
        Self {
            medium: "medium".into(),
            auto: "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub credential: Secret,
    pub models: ModelIds,
    pub timeout: Duration,
    pub max_retries: u32,
    pub quality_map: QualityMap,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            credential: Secret::default(),
            models: ModelIds::default(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            quality_map: QualityMap::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{var}: {detail}")]
    BadValue { var: &'static str, detail: String },
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("endpoint `{0}` is not an http(s) URL")]
    BadEndpoint(String),
    #[error("HTTP client: {0}")]
    Client(String),
}

impl ProviderConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Read PROVIDER_ENDPOINT, PROVIDER_KEY, TEXT_MODEL, IMAGE_MODEL,
    /// THUMBNAIL_MODEL, EMBED_MODEL, REQUEST_TIMEOUT_S and MAX_RETRIES;
    /// unset variables keep their defaults.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        if let Some(v) = get("PROVIDER_ENDPOINT") {
            c.endpoint = v;
        }
        if let Some(v) = get("PROVIDER_KEY") {
            c.credential = Secret::new(v);
        }
        for (var, slot) in [
            ("TEXT_MODEL", &mut c.models.text_model),
            ("IMAGE_MODEL", &mut c.models.image_model),
            ("THUMBNAIL_MODEL", &mut c.models.thumbnail_model),
            ("EMBED_MODEL", &mut c.models.embedding_model),
        ] {
            if let Some(v) = get(var) {
                *slot = v;
            }
        }
        if let Some(v) = get("REQUEST_TIMEOUT_S") {
            let secs: f64 = v.parse().map_err(|_| ConfigError::BadValue {
                var: "REQUEST_TIMEOUT_S",
                detail: format!("`{v}` is not a number"),
            })?;
            if !(secs.is_finite() && secs > 0.0) {
                return Err(ConfigError::ZeroTimeout);
            }
            c.timeout = Duration::from_secs_f64(secs);
        }
        if let Some(v) = get("MAX_RETRIES") {
            c.max_retries = v.parse().map_err(|_| ConfigError::BadValue {
                var: "MAX_RETRIES",
                detail: format!("`{v}` is not a non-negative integer"),
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(ConfigError::BadEndpoint(self.endpoint.clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides() {
        let env: HashMap<&str, &str> = [
            ("PROVIDER_ENDPOINT", "http://localhost:9000/v1"),
            ("PROVIDER_KEY", "sk-test"),
            ("IMAGE_MODEL", "img-x"),
            ("REQUEST_TIMEOUT_S", "2.5"),
            ("MAX_RETRIES", "0"),
        ]
        .into_iter()
        .collect();
        let c = ProviderConfig::from_lookup(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.endpoint, "http://localhost:9000/v1");
        assert_eq!(c.models.image_model, "img-x");
        assert_eq!(c.models.text_model, "gpt-5-2025-08-07");
        assert_eq!(c.models.thumbnail_model, "gpt-image-1-mini");
        assert_eq!(c.timeout, Duration::from_millis(2500));
        assert_eq!(c.max_retries, 0);
        assert!(!format!("{c:?}").contains("sk-test"));
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = |k: &'static str, v: &'static str| {
            ProviderConfig::from_lookup(move |q| (q == k).then(|| v.to_string())).unwrap_err()
        };
        assert_eq!(bad("REQUEST_TIMEOUT_S", "0"), ConfigError::ZeroTimeout);
        assert!(matches!(bad("MAX_RETRIES", "-1"), ConfigError::BadValue { .. }));
        assert!(matches!(bad("PROVIDER_ENDPOINT", "ftp://x"), ConfigError::BadEndpoint(_)));
    }
}
