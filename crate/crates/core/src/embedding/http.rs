//! HTTP embedding provider speaking the common `/embeddings` protocol.

use std::time::Duration;

use serde::Deserialize;

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};

/// Configuration for the HTTP embedding provider.
#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    /// Base URL; the request goes to `{base_url}/embeddings`.
    pub base_url: String,
    pub model: String,
    /// Expected embedding dimension, when known up front.
    pub dim: Option<usize>,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub timeout: Duration,
    pub max_retries: usize,
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpProviderConfig {
            base_url: base_url.into(),
            model: model.into(),
            dim: None,
            auth_env: None,
            timeout: Duration::from_secs(30),
            max_retries: 3,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

pub struct HttpEmbeddingProvider {
    agent: ureq::Agent,
    config: HttpProviderConfig,
    bearer: Option<String>,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self> {
        let bearer = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::InvalidInput(format!("bearer-token env var {var:?} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(HttpEmbeddingProvider {
            agent,
            config,
            bearer,
        })
    }

    fn url(&self) -> String {
        format!("{}/embeddings", self.config.base_url.trim_end_matches('/'))
    }
}

/// Sends a JSON POST with bounded retries on transport and server errors.
pub(crate) fn post_json_with_retries(
    agent: &ureq::Agent,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
    max_retries: usize,
) -> Result<serde_json::Value> {
    let mut last_error = String::new();
    for attempt in 0..=max_retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(100 * attempt as u64));
        }
        let mut request = agent.post(url);
        if let Some(token) = bearer {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        match request.send_json(body) {
            Ok(mut response) => {
                return response
                    .body_mut()
                    .read_json::<serde_json::Value>()
                    .map_err(|e| Error::Provider(format!("{url}: invalid JSON response: {e}")));
            }
            Err(ureq::Error::StatusCode(code)) if code < 500 && code != 429 => {
                return Err(Error::Provider(format!("{url}: HTTP status {code}")));
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(Error::Provider(format!(
        "{url}: giving up after {} attempts: {last_error}",
        max_retries + 1
    )))
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> Option<usize> {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::json!({
            "model": self.config.model,
            "input": texts,
        });
        let raw = post_json_with_retries(
            &self.agent,
            &self.url(),
            self.bearer.as_deref(),
            &body,
            self.config.max_retries,
        )?;
        let response: EmbeddingResponse = serde_json::from_value(raw)
            .map_err(|e| Error::Provider(format!("unexpected embeddings response shape: {e}")))?;
        if response.data.len() != texts.len() {
            return Err(Error::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        // Responses are re-ordered by the index field.
        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for item in response.data {
            let slot = vectors.get_mut(item.index).ok_or_else(|| {
                Error::Provider(format!("response index {} out of range", item.index))
            })?;
            if slot.replace(item.embedding).is_some() {
                return Err(Error::Provider(format!(
                    "duplicate response index {}",
                    item.index
                )));
            }
        }
        vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Provider(format!("missing response index {i}"))))
            .collect()
    }
}
